//! Accuracy / complexity evaluation and hyperparameter sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::predict;
use crate::config::PipelineConfig;
use crate::container::Dataset;
use crate::error::{KccError, Result};
use crate::gallery::{build_gallery, PrototypeGallery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub image_id: String,
    pub true_class: u32,
    pub predicted_class: Option<u32>,
    pub abstained: bool,
    pub correct: bool,
    pub num_matches: usize,
    pub complexity: usize,
    pub candidate_keypoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: u32,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Run-dependent measurements, kept apart so reports compare on content.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub wall_clock_secs: f64,
    pub peak_candidate_keypoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub config: PipelineConfig,
    pub fingerprint: String,
    pub total: usize,
    pub correct: usize,
    /// Correct over total; abstentions count as errors.
    pub accuracy: f64,
    /// Mean explanation complexity over non-abstained queries.
    pub mean_complexity: f64,
    pub abstention_rate: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// One line per query, sorted by image id.
    pub predictions: Vec<QueryOutcome>,
    pub telemetry: Telemetry,
}

impl EvalReport {
    pub fn without_telemetry(&self) -> EvalReport {
        EvalReport {
            telemetry: Telemetry::default(),
            ..self.clone()
        }
    }
}

/// Classifies every labelled image of `test` against `gallery`.
pub fn evaluate(test: &Dataset, gallery: &PrototypeGallery, config: &PipelineConfig, dataset_id: &str) -> Result<EvalReport> {
    config.validate()?;
    gallery.check_config(config)?;
    let mut config = config.clone();
    if config.encoder_id.is_empty() {
        config.encoder_id = gallery.config.encoder_id.clone();
    }
    let config = &config;
    if test.meta.encoder_id != gallery.config.encoder_id {
        log::warn!(
            "test encoder `{}` differs from gallery encoder `{}`",
            test.meta.encoder_id,
            gallery.config.encoder_id
        );
    }
    let mut queries: Vec<(&str, u32)> = test.meta.labels.iter().map(|(id, &c)| (id.as_str(), c)).collect();
    queries.sort();
    if queries.is_empty() {
        return Err(KccError::Invalid("test set has no labelled images".into()));
    }
    let start = Instant::now();
    let predictions: Vec<QueryOutcome> = queries
        .par_iter()
        .map(|&(id, true_class)| {
            let (grid, mask) = test.entry(id).map_err(|e| KccError::in_image(id, e))?;
            let p = predict(grid, mask, gallery, config).map_err(|e| KccError::in_image(id, e))?;
            Ok(QueryOutcome {
                image_id: id.to_string(),
                true_class,
                predicted_class: p.predicted_class,
                abstained: p.abstained,
                correct: !p.abstained && p.predicted_class == Some(true_class),
                num_matches: p.match_set.len(),
                complexity: p.complexity,
                candidate_keypoints: p.match_set.prototype_keypoints,
            })
        })
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    Ok(summarize(dataset_id, config, gallery, predictions, elapsed))
}

fn summarize(
    dataset_id: &str,
    config: &PipelineConfig,
    gallery: &PrototypeGallery,
    predictions: Vec<QueryOutcome>,
    elapsed: f64,
) -> EvalReport {
    let total = predictions.len();
    let correct = predictions.iter().filter(|p| p.correct).count();
    let answered: Vec<&QueryOutcome> = predictions.iter().filter(|p| !p.abstained).collect();
    let mean_complexity = if answered.is_empty() {
        0.0
    } else {
        answered.iter().map(|p| p.complexity as f64).sum::<f64>() / answered.len() as f64
    };
    let mut per: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for p in &predictions {
        let e = per.entry(p.true_class).or_default();
        e.0 += 1;
        e.1 += p.correct as usize;
    }
    EvalReport {
        dataset_id: dataset_id.to_string(),
        config: config.clone(),
        fingerprint: gallery.fingerprint.clone(),
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        mean_complexity,
        abstention_rate: (total - answered.len()) as f64 / total as f64,
        per_class: per
            .into_iter()
            .map(|(class, (t, c))| ClassAccuracy {
                class,
                total: t,
                correct: c,
                accuracy: c as f64 / t as f64,
            })
            .collect(),
        telemetry: Telemetry {
            wall_clock_secs: elapsed,
            peak_candidate_keypoints: predictions.iter().map(|p| p.candidate_keypoints).max().unwrap_or(0),
        },
        predictions,
    }
}

/// Value lists for the swept fields. An empty list means "use the base value".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub n_segments: Vec<usize>,
    pub per_class: Vec<usize>,
    pub j: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base: PipelineConfig,
}

impl SweepGrid {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let grid: SweepGrid = toml::from_str(text).map_err(|e| KccError::Config(e.to_string()))?;
        grid.base.validate()?;
        Ok(grid)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KccError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Cartesian product in (n_segments, per_class, j, seed) order, with
    /// duplicates removed. Returns the configs and the number dropped.
    pub fn expand(&self) -> Result<(Vec<PipelineConfig>, usize)> {
        let or_base = |v: &[usize], b: usize| if v.is_empty() { vec![b] } else { v.to_vec() };
        let seeds = if self.seeds.is_empty() { vec![self.base.seed] } else { self.seeds.clone() };
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut dropped = 0;
        for &n_segments in &or_base(&self.n_segments, self.base.n_segments) {
            for &per_class in &or_base(&self.per_class, self.base.per_class) {
                for &j in &or_base(&self.j, self.base.j) {
                    for &seed in &seeds {
                        let cfg = PipelineConfig {
                            n_segments,
                            per_class,
                            j,
                            seed,
                            ..self.base.clone()
                        };
                        cfg.validate()?;
                        if seen.insert((n_segments, per_class, j, seed)) {
                            out.push(cfg);
                        } else {
                            dropped += 1;
                        }
                    }
                }
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} duplicate sweep configurations");
        }
        Ok((out, dropped))
    }
}

/// Evaluates every grid cell. Galleries are shared between cells that differ only in `j`.
pub fn run_sweep(train: &Dataset, test: &Dataset, grid: &SweepGrid, dataset_id: &str) -> Result<Vec<EvalReport>> {
    let (configs, _) = grid.expand()?;
    let mut galleries: BTreeMap<String, PrototypeGallery> = BTreeMap::new();
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let fp = cfg.fingerprint();
        if !galleries.contains_key(&fp) {
            log::info!("building gallery n_segments={} per_class={} seed={}", cfg.n_segments, cfg.per_class, cfg.seed);
            galleries.insert(fp.clone(), build_gallery(train, cfg)?);
        }
        reports.push(evaluate(test, &galleries[&fp], cfg, dataset_id)?);
    }
    Ok(reports)
}

/// Tab-separated summary, one row per report.
pub fn sweep_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("n_segments\tper_class\tj\tseed\taccuracy\tmean_complexity\tabstention_rate\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\n",
            r.config.n_segments, r.config.per_class, r.config.j, r.config.seed, r.accuracy, r.mean_complexity, r.abstention_rate
        ));
    }
    out
}
