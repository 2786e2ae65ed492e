use crate::container::{ForegroundMask, TokenGrid};
use crate::error::{KccError, Result};

/// Token features and foreground mask co-registered at the working resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingGrid {
    pub image_id: String,
    pub work_h: usize,
    pub work_w: usize,
    pub dim: usize,
    /// Row-major `[work_h, work_w, dim]`.
    pub features: Vec<f32>,
    /// Row-major `[work_h, work_w]`, each 0 or 1.
    pub mask: Vec<u8>,
}

impl WorkingGrid {
    pub fn feature(&self, pixel: usize) -> &[f32] {
        &self.features[pixel * self.dim..(pixel + 1) * self.dim]
    }

    pub fn is_foreground(&self, pixel: usize) -> bool {
        self.mask[pixel] != 0
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }
}

/// Token resolution scaled by `scale_factor`, clamped to the input size.
pub fn choose_working_resolution(grid: &TokenGrid, scale_factor: usize) -> (usize, usize) {
    let f = scale_factor.max(1);
    (
        (grid.grid_h * f).min(grid.orig_h),
        (grid.grid_w * f).min(grid.orig_w),
    )
}

/// Align-corners source coordinate for output index `i`.
fn source_coord(i: usize, out: usize, input: usize) -> (usize, usize, f64) {
    if out <= 1 || input <= 1 {
        return (0, 0, 0.0);
    }
    let pos = (i * (input - 1)) as f64 / (out - 1) as f64;
    let lo = (pos.floor() as usize).min(input - 1);
    let hi = (lo + 1).min(input - 1);
    (lo, hi, pos - lo as f64)
}

/// Nearest source index for output `i` using pixel-center sampling.
fn nearest_index(i: usize, out: usize, input: usize) -> usize {
    (((2 * i + 1) * input) / (2 * out)).min(input - 1)
}

/// Bilinear (align-corners) upsampling of the token grid plus nearest-neighbour
/// downsampling of the mask to `work_h x work_w`.
pub fn resample(grid: &TokenGrid, mask: &ForegroundMask, work_h: usize, work_w: usize) -> Result<WorkingGrid> {
    if grid.image_id != mask.image_id {
        return Err(KccError::Invalid(format!(
            "mask `{}` paired with grid `{}`",
            mask.image_id, grid.image_id
        )));
    }
    if mask.height != grid.orig_h || mask.width != grid.orig_w {
        return Err(KccError::Invalid(format!(
            "mask `{}` is {}x{}, image is {}x{}",
            mask.image_id, mask.height, mask.width, grid.orig_h, grid.orig_w
        )));
    }
    if work_h < grid.grid_h || work_h > grid.orig_h || work_w < grid.grid_w || work_w > grid.orig_w {
        return Err(KccError::Invalid(format!(
            "working resolution {work_h}x{work_w} outside [{}x{}, {}x{}]",
            grid.grid_h, grid.grid_w, grid.orig_h, grid.orig_w
        )));
    }
    let d = grid.dim;
    let cols: Vec<_> = (0..work_w).map(|x| source_coord(x, work_w, grid.grid_w)).collect();
    let mut features = Vec::with_capacity(work_h * work_w * d);
    for y in 0..work_h {
        let (y0, y1, ty) = source_coord(y, work_h, grid.grid_h);
        for &(x0, x1, tx) in &cols {
            let (a, b) = (grid.token(y0, x0), grid.token(y0, x1));
            let (c, e) = (grid.token(y1, x0), grid.token(y1, x1));
            for k in 0..d {
                let (a, b, c, e) = (a[k] as f64, b[k] as f64, c[k] as f64, e[k] as f64);
                let top = a + (b - a) * tx;
                let bottom = c + (e - c) * tx;
                let v = top + (bottom - top) * ty;
                let lo = a.min(b).min(c).min(e);
                let hi = a.max(b).max(c).max(e);
                features.push(v.clamp(lo, hi) as f32);
            }
        }
    }
    let mut wmask = Vec::with_capacity(work_h * work_w);
    for y in 0..work_h {
        let sy = nearest_index(y, work_h, mask.height);
        for x in 0..work_w {
            let sx = nearest_index(x, work_w, mask.width);
            wmask.push(mask.values[sy * mask.width + sx]);
        }
    }
    Ok(WorkingGrid {
        image_id: grid.image_id.clone(),
        work_h,
        work_w,
        dim: d,
        features,
        mask: wmask,
    })
}
