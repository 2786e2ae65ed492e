//! Prototype selection, precomputed prototype keypoints, and the `KCCG`
//! gallery file.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SelectionStrategy};
use crate::container::{read_container, Dataset, TokenGrid};
use crate::error::{KccError, Result};
use crate::format::{self, EntryInfo, PayloadWriter};
use crate::keypoints::{image_keypoints, Keypoint};
use crate::matching::cosine_distance;

pub const GALLERY_MAGIC: &[u8; 4] = b"KCCG";
pub const GALLERY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeRecord {
    pub image_id: String,
    pub class_label: u32,
    pub keypoints: Vec<Keypoint>,
    /// Image-level summary used for J-pruning.
    pub global_vector: Vec<f32>,
    pub image_path: Option<String>,
    pub orig_h: usize,
    pub orig_w: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeGallery {
    pub records: Vec<PrototypeRecord>,
    pub per_class: usize,
    /// Class names indexed by class id.
    pub classes: Vec<String>,
    /// Classes that had fewer than `per_class` usable images, with the count used.
    pub shortfall: BTreeMap<u32, usize>,
    pub config: PipelineConfig,
    pub fingerprint: String,
}

impl PrototypeGallery {
    pub fn record(&self, image_id: &str) -> Option<&PrototypeRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    pub fn class_ids(&self) -> Vec<u32> {
        (0..self.classes.len() as u32).collect()
    }

    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.global_vector.len())
    }

    /// Fails with `ConfigDrift` unless the gallery was built under `config`.
    /// An empty encoder id in `config` stands for the gallery's encoder.
    pub fn check_config(&self, config: &PipelineConfig) -> Result<()> {
        let expected = if config.encoder_id.is_empty() {
            PipelineConfig {
                encoder_id: self.config.encoder_id.clone(),
                ..config.clone()
            }
            .fingerprint()
        } else {
            config.fingerprint()
        };
        if expected != self.fingerprint {
            return Err(KccError::ConfigDrift {
                expected,
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }
}

/// The class token when the grid has one, otherwise the mean keypoint representation.
pub fn compute_global_vector(grid: &TokenGrid, keypoints: &[Keypoint]) -> Result<Vec<f32>> {
    if let Some(cls) = &grid.cls_vector {
        return Ok(cls.clone());
    }
    if keypoints.is_empty() {
        return Err(KccError::CannotSummarize(grid.image_id.clone()));
    }
    let mut sum = vec![0.0f64; grid.dim];
    for k in keypoints {
        for (s, &v) in sum.iter_mut().zip(&k.representation) {
            *s += v as f64;
        }
    }
    let n = keypoints.len() as f64;
    Ok(sum.into_iter().map(|v| (v / n) as f32).collect())
}

fn class_rng(seed: u64, class: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (class as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Picks `min(per_class, available)` distinct images per class. Inputs are
/// taken in image-id order and the selection is returned in that order.
pub fn select_prototypes(
    class_images: &BTreeMap<u32, Vec<(String, Vec<f32>)>>,
    per_class: usize,
    strategy: SelectionStrategy,
    seed: u64,
) -> Result<BTreeMap<u32, Vec<String>>> {
    if class_images.is_empty() {
        return Err(KccError::Invalid("no classes to select prototypes from".into()));
    }
    if per_class == 0 {
        return Err(KccError::Invalid("per_class must be at least 1".into()));
    }
    let mut out = BTreeMap::new();
    for (&class, images) in class_images {
        if images.is_empty() {
            return Err(KccError::Invalid(format!("class {class} has no images")));
        }
        let mut items: Vec<&(String, Vec<f32>)> = images.iter().collect();
        items.sort_by(|a, b| a.0.cmp(&b.0));
        let k = per_class.min(items.len());
        let mut chosen: Vec<usize> = if k == items.len() {
            (0..k).collect()
        } else {
            let mut rng = class_rng(seed, class);
            match strategy {
                SelectionStrategy::Random => index::sample(&mut rng, items.len(), k).into_vec(),
                SelectionStrategy::KmeansMedoid => {
                    let vectors: Vec<&[f32]> = items.iter().map(|(_, v)| v.as_slice()).collect();
                    k_medoids(&vectors, k, &mut rng)?
                }
            }
        };
        chosen.sort_unstable();
        out.insert(class, chosen.into_iter().map(|i| items[i].0.clone()).collect());
    }
    Ok(out)
}

/// PAM swap over cosine distances from a k-means++ style seeded start.
fn k_medoids(vectors: &[&[f32]], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = vectors.len();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = cosine_distance(vectors[i], vectors[j])?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let d = |i: usize, j: usize| dist[i * n + j];

    let mut medoids = vec![rng.random_range(0..n)];
    while medoids.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let m = medoids.iter().map(|&m| d(i, m)).fold(f64::INFINITY, f64::min);
                m * m
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if t < w {
                        break;
                    }
                    t -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            (0..n).find(|i| !medoids.contains(i)).expect("k < n")
        };
        medoids.push(next);
    }

    let cost = |meds: &[usize]| -> f64 {
        (0..n)
            .map(|i| meds.iter().map(|&m| d(i, m)).fold(f64::INFINITY, f64::min))
            .sum()
    };
    let mut current = cost(&medoids);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for cand in 0..n {
                if medoids.contains(&cand) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = cand;
                let c = cost(&trial);
                if c < current - 1e-12 && best.is_none_or(|(bc, _, _)| c < bc) {
                    best = Some((c, slot, cand));
                }
            }
        }
        match best {
            Some((c, slot, cand)) => {
                medoids[slot] = cand;
                current = c;
            }
            None => break,
        }
    }
    Ok(medoids)
}

/// Extracts keypoints for every labelled image, selects prototypes and
/// assembles the gallery. Images without foreground are skipped. An empty
/// encoder id in `config` is taken from the dataset.
pub fn build_gallery(dataset: &Dataset, config: &PipelineConfig) -> Result<PrototypeGallery> {
    config.validate()?;
    dataset.validate()?;
    let mut config = config.clone();
    if config.encoder_id.is_empty() {
        config.encoder_id = dataset.meta.encoder_id.clone();
    } else if config.encoder_id != dataset.meta.encoder_id {
        log::warn!(
            "config encoder `{}` differs from dataset encoder `{}`",
            config.encoder_id,
            dataset.meta.encoder_id
        );
    }
    let config = &config;
    let mut candidates: Vec<(u32, &str)> = dataset
        .meta
        .labels
        .iter()
        .map(|(id, &c)| (c, id.as_str()))
        .collect();
    candidates.sort();
    if candidates.is_empty() {
        return Err(KccError::Invalid("dataset has no labelled images".into()));
    }

    let extracted: Vec<Option<PrototypeRecord>> = candidates
        .par_iter()
        .map(|&(class, id)| {
            let (grid, mask) = dataset.entry(id).map_err(|e| KccError::in_image(id, e))?;
            let keypoints = match image_keypoints(grid, mask, config, Some(class)) {
                Ok(k) => k,
                Err(KccError::NoForeground(_)) => {
                    log::warn!("skipping `{id}`: empty foreground");
                    return Ok(None);
                }
                Err(e) => return Err(KccError::in_image(id, e)),
            };
            let global_vector = compute_global_vector(grid, &keypoints).map_err(|e| KccError::in_image(id, e))?;
            let degenerate = |v: &[f32]| v.iter().all(|&x| x == 0.0);
            if degenerate(&global_vector) || keypoints.iter().any(|k| degenerate(&k.representation)) {
                log::warn!("skipping `{id}`: zero-norm representation");
                return Ok(None);
            }
            Ok(Some(PrototypeRecord {
                image_id: id.to_string(),
                class_label: class,
                keypoints,
                global_vector,
                image_path: dataset.meta.image_paths.get(id).cloned(),
                orig_h: grid.orig_h,
                orig_w: grid.orig_w,
            }))
        })
        .collect::<Result<_>>()?;
    let usable: Vec<PrototypeRecord> = extracted.into_iter().flatten().collect();

    let mut class_images: BTreeMap<u32, Vec<(String, Vec<f32>)>> = BTreeMap::new();
    for r in &usable {
        class_images
            .entry(r.class_label)
            .or_default()
            .push((r.image_id.clone(), r.global_vector.clone()));
    }
    if class_images.is_empty() {
        return Err(KccError::Invalid("no usable prototype images".into()));
    }
    let mut shortfall = BTreeMap::new();
    for class in 0..dataset.meta.classes.len() as u32 {
        let available = class_images.get(&class).map_or(0, Vec::len);
        if available < config.per_class {
            log::warn!(
                "class {class} has {available} usable images, fewer than {} prototypes",
                config.per_class
            );
            shortfall.insert(class, available);
        }
    }
    let selected = select_prototypes(&class_images, config.per_class, config.selection, config.seed)?;
    let mut by_id: BTreeMap<String, PrototypeRecord> =
        usable.into_iter().map(|r| (r.image_id.clone(), r)).collect();
    let records = selected
        .into_values()
        .flatten()
        .map(|id| by_id.remove(&id).expect("selected ids come from usable records"))
        .collect();

    Ok(PrototypeGallery {
        records,
        per_class: config.per_class,
        classes: dataset.meta.classes.clone(),
        shortfall,
        config: config.clone(),
        fingerprint: config.fingerprint(),
    })
}

pub fn build_gallery_from_path(path: impl AsRef<Path>, config: &PipelineConfig) -> Result<PrototypeGallery> {
    let (dataset, _) = read_container(path)?;
    build_gallery(&dataset, config)
}

#[derive(Serialize, Deserialize)]
struct KeypointDoc {
    segment_id: u32,
    pixel_count: usize,
    centroid_work: (f64, f64),
    centroid_input: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct RecordDoc {
    image_id: String,
    class_label: u32,
    image_path: Option<String>,
    orig_h: usize,
    orig_w: usize,
    dim: usize,
    keypoints: Vec<KeypointDoc>,
}

#[derive(Serialize, Deserialize)]
struct GalleryDoc {
    format_version: u32,
    fingerprint: String,
    config: PipelineConfig,
    per_class: usize,
    classes: Vec<String>,
    shortfall: BTreeMap<u32, usize>,
    records: Vec<RecordDoc>,
    payload_length: u64,
    entries: Vec<EntryInfo>,
}

pub fn encode_gallery(g: &PrototypeGallery) -> Result<Vec<u8>> {
    let mut w = PayloadWriter::default();
    let mut records = Vec::with_capacity(g.records.len());
    for r in &g.records {
        let dim = r.global_vector.len();
        w.push_f32(format!("global:{}", r.image_id), vec![dim], &r.global_vector);
        let mut reps = Vec::with_capacity(r.keypoints.len() * dim);
        for k in &r.keypoints {
            if k.representation.len() != dim {
                return Err(KccError::Invalid(format!("keypoint dimension mismatch in `{}`", r.image_id)));
            }
            reps.extend_from_slice(&k.representation);
        }
        w.push_f32(format!("reps:{}", r.image_id), vec![r.keypoints.len(), dim], &reps);
        records.push(RecordDoc {
            image_id: r.image_id.clone(),
            class_label: r.class_label,
            image_path: r.image_path.clone(),
            orig_h: r.orig_h,
            orig_w: r.orig_w,
            dim,
            keypoints: r
                .keypoints
                .iter()
                .map(|k| KeypointDoc {
                    segment_id: k.segment_id,
                    pixel_count: k.pixel_count,
                    centroid_work: k.centroid_work,
                    centroid_input: k.centroid_input,
                })
                .collect(),
        });
    }
    let (entries, payload) = w.into_parts();
    let doc = GalleryDoc {
        format_version: GALLERY_VERSION,
        fingerprint: g.fingerprint.clone(),
        config: g.config.clone(),
        per_class: g.per_class,
        classes: g.classes.clone(),
        shortfall: g.shortfall.clone(),
        records,
        payload_length: payload.len() as u64,
        entries,
    };
    let manifest = serde_json::to_vec(&doc).map_err(|e| KccError::Manifest(e.to_string()))?;
    Ok(format::assemble(GALLERY_MAGIC, GALLERY_VERSION, &manifest, &payload))
}

/// Decodes a gallery. With `expected_fingerprint`, a mismatch is a config-drift error.
pub fn decode_gallery(bytes: &[u8], expected_fingerprint: Option<&str>) -> Result<PrototypeGallery> {
    let raw = format::split(bytes, GALLERY_MAGIC, GALLERY_VERSION)?;
    let doc: GalleryDoc =
        serde_json::from_slice(raw.manifest).map_err(|e| KccError::Manifest(e.to_string()))?;
    format::verify_entries(&doc.entries, doc.payload_length, raw.payload, bytes.len())?;
    if doc.fingerprint.len() != 64 || !doc.fingerprint.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(KccError::Manifest(format!("malformed fingerprint `{}`", doc.fingerprint)));
    }
    if doc.fingerprint != doc.config.fingerprint() {
        return Err(KccError::Manifest("stored fingerprint does not match stored config".into()));
    }
    if let Some(expected) = expected_fingerprint {
        if expected != doc.fingerprint {
            return Err(KccError::ConfigDrift {
                expected: expected.to_string(),
                found: doc.fingerprint,
            });
        }
    }
    let by_name: BTreeMap<&str, &EntryInfo> = doc.entries.iter().map(|e| (e.name.as_str(), e)).collect();
    let lookup = |name: String| {
        by_name
            .get(name.as_str())
            .copied()
            .ok_or_else(|| KccError::Manifest(format!("missing entry `{name}`")))
    };
    let mut records = Vec::with_capacity(doc.records.len());
    for rd in doc.records {
        let global_vector = format::entry_f32(raw.payload, lookup(format!("global:{}", rd.image_id))?)?;
        let reps_entry = lookup(format!("reps:{}", rd.image_id))?;
        if reps_entry.shape != [rd.keypoints.len(), rd.dim] || global_vector.len() != rd.dim {
            return Err(KccError::Manifest(format!("record `{}` has inconsistent shapes", rd.image_id)));
        }
        let reps = format::entry_f32(raw.payload, reps_entry)?;
        let keypoints = rd
            .keypoints
            .into_iter()
            .zip(reps.chunks_exact(rd.dim.max(1)))
            .map(|(k, rep)| Keypoint {
                image_id: rd.image_id.clone(),
                segment_id: k.segment_id,
                representation: rep.to_vec(),
                pixel_count: k.pixel_count,
                centroid_work: k.centroid_work,
                centroid_input: k.centroid_input,
                class_label: Some(rd.class_label),
            })
            .collect();
        if global_vector.iter().any(|v| !v.is_finite()) || global_vector.iter().all(|&v| v == 0.0) {
            return Err(KccError::Manifest(format!("record `{}` has a degenerate global vector", rd.image_id)));
        }
        records.push(PrototypeRecord {
            image_id: rd.image_id,
            class_label: rd.class_label,
            keypoints,
            global_vector,
            image_path: rd.image_path,
            orig_h: rd.orig_h,
            orig_w: rd.orig_w,
        });
    }
    Ok(PrototypeGallery {
        records,
        per_class: doc.per_class,
        classes: doc.classes,
        shortfall: doc.shortfall,
        config: doc.config,
        fingerprint: doc.fingerprint,
    })
}

pub fn save_gallery(g: &PrototypeGallery, path: impl AsRef<Path>) -> Result<()> {
    format::write_file(path.as_ref(), &encode_gallery(g)?)
}

pub fn load_gallery(path: impl AsRef<Path>, expected_fingerprint: Option<&str>) -> Result<PrototypeGallery> {
    decode_gallery(&format::read_file(path.as_ref())?, expected_fingerprint)
}
