//! Prototype pruning and mutual nearest-neighbour keypoint matching.

use std::cmp::Ordering;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{KccError, Result};
use crate::gallery::{PrototypeGallery, PrototypeRecord};
use crate::keypoints::Keypoint;

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(KccError::Invalid(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if !(na > 0.0 && nb > 0.0 && na.is_finite() && nb.is_finite()) {
        return Err(KccError::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `1 − cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    cosine_similarity(a, b).map(|s| 1.0 - s)
}

/// One mutual nearest-neighbour pair between a query keypoint and a prototype keypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub query_segment_id: u32,
    pub prototype_image_id: String,
    pub prototype_segment_id: u32,
    pub class_label: u32,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub query_image_id: String,
    /// Sorted by query segment id.
    pub matches: Vec<Match>,
    /// Prototype images that took part in matching, in pruning order.
    pub candidate_ids: Vec<String>,
    pub j: usize,
    pub query_keypoints: usize,
    pub prototype_keypoints: usize,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Empty set for a query that produced no keypoints.
    pub fn empty(query_image_id: &str, j: usize) -> Self {
        MatchSet {
            query_image_id: query_image_id.to_string(),
            matches: Vec::new(),
            candidate_ids: Vec::new(),
            j,
            query_keypoints: 0,
            prototype_keypoints: 0,
        }
    }
}

/// The `j` records whose global vectors are most cosine-similar to
/// `query_global`, most similar first. Ties go to the lower
/// `(class_label, image_id)`.
pub fn prune_prototypes<'g>(
    query_global: &[f32],
    gallery: &'g PrototypeGallery,
    j: usize,
) -> Result<Vec<&'g PrototypeRecord>> {
    if gallery.records.is_empty() {
        return Err(KccError::Invalid("empty gallery".into()));
    }
    if j == 0 {
        return Err(KccError::Invalid("J must be at least 1".into()));
    }
    let mut scored = gallery
        .records
        .iter()
        .map(|r| Ok((cosine_similarity(query_global, &r.global_vector)?, r)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|(sa, ra), (sb, rb)| {
        sb.total_cmp(sa)
            .then(ra.class_label.cmp(&rb.class_label))
            .then_with(|| ra.image_id.cmp(&rb.image_id))
    });
    scored.truncate(j);
    Ok(scored.into_iter().map(|(_, r)| r).collect())
}

fn unit_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f32]>, dim: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let mut out = Array2::<f64>::zeros((n, dim));
    for (i, v) in rows.enumerate() {
        if v.len() != dim {
            return Err(KccError::Invalid(format!("dimension mismatch: {} vs {dim}", v.len())));
        }
        let nv = norm(v);
        if !(nv > 0.0 && nv.is_finite()) {
            return Err(KccError::ZeroNorm);
        }
        for (o, &x) in out.row_mut(i).iter_mut().zip(v) {
            *o = x as f64 / nv;
        }
    }
    Ok(out)
}

/// Mutual nearest neighbours between the query keypoints and the union of all
/// candidate prototype keypoints, under cosine distance.
///
/// Similarities come from one product of unit-normalized matrices. Argmin ties
/// resolve to the first element in the canonical orders: query keypoints by
/// segment id, prototype keypoints by `(class_label, image_id, segment_id)`.
pub fn mutual_nn(query: &[Keypoint], candidates: &[&PrototypeRecord]) -> Result<MatchSet> {
    if query.is_empty() {
        return Err(KccError::Invalid("no query keypoints".into()));
    }
    if candidates.is_empty() || candidates.iter().any(|c| c.keypoints.is_empty()) {
        return Err(KccError::Invalid("every candidate prototype needs keypoints".into()));
    }
    let dim = query[0].representation.len();

    let mut q: Vec<&Keypoint> = query.iter().collect();
    q.sort_by_key(|k| k.segment_id);
    let mut pool: Vec<(&PrototypeRecord, &Keypoint)> = candidates
        .iter()
        .flat_map(|r| r.keypoints.iter().map(move |k| (*r, k)))
        .collect();
    pool.sort_by(|(ra, ka), (rb, kb)| {
        ra.class_label
            .cmp(&rb.class_label)
            .then_with(|| ra.image_id.cmp(&rb.image_id))
            .then(ka.segment_id.cmp(&kb.segment_id))
    });

    let qm = unit_rows(q.iter().map(|k| k.representation.as_slice()), dim)?;
    let pm = unit_rows(pool.iter().map(|(_, k)| k.representation.as_slice()), dim)?;
    let sim = qm.dot(&pm.t());

    let first_max = |it: &mut dyn Iterator<Item = (usize, f64)>| {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (i, s) in it {
            if s.total_cmp(&best.1) == Ordering::Greater {
                best = (i, s);
            }
        }
        best.0
    };
    let row_best: Vec<usize> = (0..q.len())
        .map(|i| first_max(&mut sim.row(i).iter().copied().enumerate()))
        .collect();
    let col_best: Vec<usize> = (0..pool.len())
        .map(|j| first_max(&mut sim.column(j).iter().copied().enumerate()))
        .collect();

    let matches = row_best
        .iter()
        .enumerate()
        .filter(|&(i, &j)| col_best[j] == i)
        .map(|(i, &j)| {
            let (record, kp) = pool[j];
            Match {
                query_segment_id: q[i].segment_id,
                prototype_image_id: record.image_id.clone(),
                prototype_segment_id: kp.segment_id,
                class_label: record.class_label,
                similarity: sim[[i, j]].clamp(-1.0, 1.0),
            }
        })
        .collect();

    Ok(MatchSet {
        query_image_id: query[0].image_id.clone(),
        matches,
        candidate_ids: candidates.iter().map(|r| r.image_id.clone()).collect(),
        j: candidates.len(),
        query_keypoints: q.len(),
        prototype_keypoints: pool.len(),
    })
}
