//! Procedural token-grid datasets for desk-scale testing.
//!
//! Every class owns one unit feature direction. An image is an elliptical
//! foreground blob whose patches carry the class direction, on a background
//! carrying a shared background direction. Patches straddling the blob edge
//! mix both in proportion to their foreground coverage, and every token gets
//! isotropic Gaussian noise with per-component standard deviation `noise`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::container::{Dataset, DatasetMeta, ForegroundMask, TokenGrid};
use crate::error::{KccError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub images_per_class: usize,
    pub grid: usize,
    pub dim: usize,
    pub patch_size: usize,
    pub noise: f64,
    /// Fixes the class directions; share it between splits of one dataset.
    pub seed: u64,
    /// Name of the split; different splits draw different images.
    pub split: String,
    pub with_cls: bool,
    pub encoder_id: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 3,
            images_per_class: 20,
            grid: 16,
            dim: 32,
            patch_size: 8,
            noise: 0.3,
            seed: 0,
            split: "train".into(),
            with_cls: false,
            encoder_id: "synthetic".into(),
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// `count` unit vectors, orthonormal as far as the dimension allows.
fn directions(seed: u64, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = gaussian(&mut rng, dim);
        if out.len() < dim {
            for u in &out {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

fn split_seed(seed: u64, split: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{split}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn synthesize(spec: &SynthSpec) -> Result<Dataset> {
    if spec.classes == 0 || spec.images_per_class == 0 || spec.grid == 0 || spec.dim == 0 || spec.patch_size == 0 {
        return Err(KccError::Invalid("synthetic spec needs positive sizes".into()));
    }
    if !spec.noise.is_finite() || spec.noise < 0.0 {
        return Err(KccError::Invalid("noise must be finite and nonnegative".into()));
    }
    let dirs = directions(spec.seed, spec.classes + 1, spec.dim);
    let background = &dirs[spec.classes];
    let side = spec.grid * spec.patch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(spec.seed, &spec.split));

    let mut ds = Dataset {
        meta: DatasetMeta {
            encoder_id: spec.encoder_id.clone(),
            classes: (0..spec.classes).map(|c| format!("class_{c}")).collect(),
            labels: BTreeMap::new(),
            image_paths: BTreeMap::new(),
        },
        ..Dataset::default()
    };
    for (class, direction) in dirs[..spec.classes].iter().enumerate() {
        for i in 0..spec.images_per_class {
            let image_id = format!("{}-c{class}-{i:03}", spec.split);
            let mask = blob_mask(&mut rng, side, &image_id);
            let mut tokens = Vec::with_capacity(spec.grid * spec.grid * spec.dim);
            let mut fg_sum = vec![0.0f64; spec.dim];
            for gr in 0..spec.grid {
                for gc in 0..spec.grid {
                    let mut covered = 0usize;
                    for y in gr * spec.patch_size..(gr + 1) * spec.patch_size {
                        for x in gc * spec.patch_size..(gc + 1) * spec.patch_size {
                            covered += mask.get(y, x) as usize;
                        }
                    }
                    let frac = covered as f64 / (spec.patch_size * spec.patch_size) as f64;
                    for k in 0..spec.dim {
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        let v = frac * direction[k] + (1.0 - frac) * background[k] + spec.noise * noise;
                        fg_sum[k] += frac * v;
                        tokens.push(v as f32);
                    }
                }
            }
            let cls_vector = spec.with_cls.then(|| {
                let n = fg_sum.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                fg_sum.iter().map(|x| (x / n) as f32).collect()
            });
            ds.grids.push(TokenGrid {
                image_id: image_id.clone(),
                grid_h: spec.grid,
                grid_w: spec.grid,
                dim: spec.dim,
                tokens,
                cls_vector,
                orig_h: side,
                orig_w: side,
                patch_size: spec.patch_size,
            });
            ds.masks.push(mask);
            ds.meta.labels.insert(image_id.clone(), class as u32);
            ds.meta.image_paths.insert(image_id.clone(), format!("{image_id}.png"));
        }
    }
    ds.validate()?;
    Ok(ds)
}

/// Rotated ellipse covering roughly 10–35% of the image.
fn blob_mask(rng: &mut ChaCha8Rng, side: usize, image_id: &str) -> ForegroundMask {
    let s = side as f64;
    let cy = s * rng.random_range(0.38..0.62);
    let cx = s * rng.random_range(0.38..0.62);
    let ry = s * rng.random_range(0.2..0.32);
    let rx = s * rng.random_range(0.2..0.32);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (sin, cos) = theta.sin_cos();
    let mut values = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let dy = y as f64 + 0.5 - cy;
            let dx = x as f64 + 0.5 - cx;
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            values.push(((u / rx).powi(2) + (v / ry).powi(2) <= 1.0) as u8);
        }
    }
    ForegroundMask {
        image_id: image_id.to_string(),
        height: side,
        width: side,
        values,
    }
}

const CLASS_COLORS: [[u8; 3]; 8] = [
    [214, 96, 77],
    [67, 147, 195],
    [90, 174, 97],
    [153, 112, 171],
    [224, 130, 20],
    [53, 151, 143],
    [191, 129, 45],
    [118, 42, 131],
];

/// Writes one PNG per image into `dir`, at the paths recorded in the dataset
/// metadata: class-colored foreground shaded by token magnitude, gray background.
pub fn write_preview_images(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| KccError::io(dir, e))?;
    for grid in &ds.grids {
        let mask = ds
            .mask(&grid.image_id)
            .ok_or_else(|| KccError::Invalid(format!("no mask for `{}`", grid.image_id)))?;
        let color = CLASS_COLORS[ds.label(&grid.image_id).unwrap_or(0) as usize % CLASS_COLORS.len()];
        let img = image::RgbImage::from_fn(grid.orig_w as u32, grid.orig_h as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            let shade = {
                let t = grid.token((y / grid.patch_size).min(grid.grid_h - 1), (x / grid.patch_size).min(grid.grid_w - 1));
                let n = t.iter().map(|v| v * v).sum::<f32>().sqrt();
                (0.75 + 0.25 * (n / (1.0 + n))).min(1.0)
            };
            if mask.get(y, x) {
                image::Rgb(color.map(|c| (c as f32 * shade) as u8))
            } else {
                image::Rgb([225, 225, 225].map(|c: u8| (c as f32 * shade) as u8))
            }
        });
        let rel = ds
            .meta
            .image_paths
            .get(&grid.image_id)
            .cloned()
            .unwrap_or_else(|| format!("{}.png", grid.image_id));
        let path = dir.join(rel);
        img.save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| KccError::io(&path, std::io::Error::other(e)))?;
    }
    Ok(())
}
