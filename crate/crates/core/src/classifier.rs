//! Classification by counting matched keypoints per class.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::container::{ForegroundMask, TokenGrid};
use crate::error::{KccError, Result};
use crate::gallery::{compute_global_vector, PrototypeGallery};
use crate::keypoints::{image_keypoints, Keypoint};
use crate::matching::{mutual_nn, prune_prototypes, MatchSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub query_image_id: String,
    /// Fraction of matches per class; empty when abstained.
    pub scores: BTreeMap<u32, f64>,
    pub predicted_class: Option<u32>,
    pub abstained: bool,
    pub complexity: usize,
    pub match_set: MatchSet,
    pub query_keypoints: Vec<Keypoint>,
    /// (height, width) of the query image in pixels.
    pub query_size: (usize, usize),
    pub diagnostic: Option<String>,
}

impl Prediction {
    fn abstain(grid: &TokenGrid, match_set: MatchSet, query_keypoints: Vec<Keypoint>, why: String) -> Self {
        Prediction {
            query_image_id: grid.image_id.clone(),
            scores: BTreeMap::new(),
            predicted_class: None,
            abstained: true,
            complexity: 0,
            match_set,
            query_keypoints,
            query_size: (grid.orig_h, grid.orig_w),
            diagnostic: Some(why),
        }
    }
}

/// Per-class match fractions over `classes`; `None` when there are no matches.
pub fn count_scores(m: &MatchSet, classes: &[u32]) -> Option<BTreeMap<u32, f64>> {
    if m.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<u32, usize> = classes.iter().map(|&c| (c, 0)).collect();
    for x in &m.matches {
        *counts.entry(x.class_label).or_default() += 1;
    }
    let total = m.len() as f64;
    Some(counts.into_iter().map(|(c, n)| (c, n as f64 / total)).collect())
}

/// Highest score, lowest class id on ties.
pub fn argmax_class(scores: &BTreeMap<u32, f64>) -> Option<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (&c, &s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best.map(|(c, _)| c)
}

/// Distinct prototype images among the matches of `predicted_class`.
pub fn explanation_complexity(m: &MatchSet, predicted_class: u32) -> usize {
    m.matches
        .iter()
        .filter(|x| x.class_label == predicted_class)
        .map(|x| x.prototype_image_id.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Turns a match set into a prediction over the gallery's classes.
pub fn classify_matches(
    grid: &TokenGrid,
    gallery: &PrototypeGallery,
    match_set: MatchSet,
    query_keypoints: Vec<Keypoint>,
) -> Prediction {
    match count_scores(&match_set, &gallery.class_ids()) {
        None => Prediction::abstain(grid, match_set, query_keypoints, "no mutual matches".into()),
        Some(scores) => {
            let predicted = argmax_class(&scores).expect("scores are nonempty");
            Prediction {
                query_image_id: grid.image_id.clone(),
                complexity: explanation_complexity(&match_set, predicted),
                scores,
                predicted_class: Some(predicted),
                abstained: false,
                match_set,
                query_keypoints,
                query_size: (grid.orig_h, grid.orig_w),
                diagnostic: None,
            }
        }
    }
}

/// Keypoints, J-pruning, mutual nearest neighbours, then counting.
///
/// An empty foreground yields an abstained prediction rather than an error.
pub fn predict(
    grid: &TokenGrid,
    mask: &ForegroundMask,
    gallery: &PrototypeGallery,
    config: &PipelineConfig,
) -> Result<Prediction> {
    gallery.check_config(config)?;
    let keypoints = match image_keypoints(grid, mask, config, None) {
        Ok(k) => k,
        Err(KccError::NoForeground(_)) => {
            return Ok(Prediction::abstain(
                grid,
                MatchSet::empty(&grid.image_id, config.j),
                Vec::new(),
                "empty foreground".into(),
            ))
        }
        Err(e) => return Err(e),
    };
    if let Some(dim) = gallery.dim() {
        if dim != grid.dim {
            return Err(KccError::Invalid(format!(
                "query `{}` has dimension {}, gallery has {dim}",
                grid.image_id, grid.dim
            )));
        }
    }
    let global = compute_global_vector(grid, &keypoints)?;
    let candidates = prune_prototypes(&global, gallery, config.j)?;
    let mut match_set = mutual_nn(&keypoints, &candidates)?;
    match_set.j = config.j;
    Ok(classify_matches(grid, gallery, match_set, keypoints))
}
