use serde::{Deserialize, Serialize};

use super::resample::WorkingGrid;
use super::slic::SegmentMap;
use crate::container::TokenGrid;
use crate::error::{KccError, Result};

/// Center of one foreground segment together with its mean token representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub image_id: String,
    pub segment_id: u32,
    pub representation: Vec<f32>,
    pub pixel_count: usize,
    /// (row, col) at working resolution.
    pub centroid_work: (f64, f64),
    /// (row, col) in input pixels.
    pub centroid_input: (f64, f64),
    pub class_label: Option<u32>,
}

/// One keypoint per realized segment, in segment-id order.
///
/// The representation is the mean of the working-resolution features over the
/// segment. The centroid is the mean member coordinate, snapped to the nearest
/// member pixel (ties in row-major order) when the pixel containing the mean
/// is not part of the segment.
pub fn extract_keypoints(
    seg: &SegmentMap,
    work: &WorkingGrid,
    grid: &TokenGrid,
    class_label: Option<u32>,
) -> Result<Vec<Keypoint>> {
    if seg.work_h != work.work_h || seg.work_w != work.work_w || seg.labels.len() != work.mask.len() {
        return Err(KccError::Invalid("segment map and working grid differ in size".into()));
    }
    let (w, d, n) = (work.work_w, work.dim, seg.n_actual);
    let mut sums = vec![vec![0.0f64; d]; n];
    let mut counts = vec![0usize; n];
    let mut coord = vec![(0.0f64, 0.0f64); n];
    for (p, &label) in seg.labels.iter().enumerate() {
        if label == 0 {
            continue;
        }
        let s = label as usize - 1;
        for (acc, &v) in sums[s].iter_mut().zip(work.feature(p)) {
            *acc += v as f64;
        }
        counts[s] += 1;
        coord[s].0 += (p / w) as f64;
        coord[s].1 += (p % w) as f64;
    }
    let scale_r = grid.orig_h as f64 / work.work_h as f64;
    let scale_c = grid.orig_w as f64 / work.work_w as f64;
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let k = counts[s];
        if k == 0 {
            return Err(KccError::Invalid(format!("segment {} has no pixels", s + 1)));
        }
        let kf = k as f64;
        let mean = (coord[s].0 / kf, coord[s].1 / kf);
        let label = s as u32 + 1;
        let centroid = snap_to_segment(seg, label, mean);
        out.push(Keypoint {
            image_id: grid.image_id.clone(),
            segment_id: label,
            representation: sums[s].iter().map(|&v| (v / kf) as f32).collect(),
            pixel_count: k,
            centroid_work: centroid,
            centroid_input: (centroid.0 * scale_r, centroid.1 * scale_c),
            class_label,
        });
    }
    Ok(out)
}

fn snap_to_segment(seg: &SegmentMap, label: u32, mean: (f64, f64)) -> (f64, f64) {
    let r = (mean.0.round() as usize).min(seg.work_h - 1);
    let c = (mean.1.round() as usize).min(seg.work_w - 1);
    if seg.label(r, c) == label {
        return mean;
    }
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for (p, &l) in seg.labels.iter().enumerate() {
        if l != label {
            continue;
        }
        let (pr, pc) = ((p / seg.work_w) as f64, (p % seg.work_w) as f64);
        let d = (pr - mean.0).powi(2) + (pc - mean.1).powi(2);
        if d < best.0 {
            best = (d, (pr, pc));
        }
    }
    best.1
}
