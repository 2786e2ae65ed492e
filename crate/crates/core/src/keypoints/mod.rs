//! Keypoint extraction: resample tokens and mask to a working resolution,
//! segment the foreground with SLIC, and summarize each segment.

mod extract;
mod resample;
mod slic;

pub use extract::{extract_keypoints, Keypoint};
pub use resample::{choose_working_resolution, resample, WorkingGrid};
pub use slic::{slic_segment, SegmentMap, SlicParams};

use crate::config::PipelineConfig;
use crate::container::{ForegroundMask, TokenGrid};
use crate::error::Result;

impl From<&PipelineConfig> for SlicParams {
    fn from(c: &PipelineConfig) -> Self {
        SlicParams {
            n_segments: c.n_segments,
            compactness: c.compactness,
            max_iters: c.max_iters,
            seed: c.seed,
        }
    }
}

/// Intermediate products of keypoint extraction for one image.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub work: WorkingGrid,
    pub segments: SegmentMap,
    pub keypoints: Vec<Keypoint>,
}

pub fn extract_image(
    grid: &TokenGrid,
    mask: &ForegroundMask,
    config: &PipelineConfig,
    class_label: Option<u32>,
) -> Result<Extraction> {
    let (h, w) = choose_working_resolution(grid, config.scale_factor);
    let work = resample(grid, mask, h, w)?;
    let segments = slic_segment(&work, &SlicParams::from(config))?;
    let keypoints = extract_keypoints(&segments, &work, grid, class_label)?;
    Ok(Extraction {
        work,
        segments,
        keypoints,
    })
}

/// Keypoints of one image under `config`.
pub fn image_keypoints(
    grid: &TokenGrid,
    mask: &ForegroundMask,
    config: &PipelineConfig,
    class_label: Option<u32>,
) -> Result<Vec<Keypoint>> {
    extract_image(grid, mask, config, class_label).map(|e| e.keypoints)
}
