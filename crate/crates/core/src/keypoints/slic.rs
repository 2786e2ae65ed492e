//! SLIC over token features, restricted to the foreground.
//!
//! Distance between a pixel and a cluster center:
//! `‖f − c_f‖² / σ_f² + m² · ‖p − c_p‖² / s²`, where `σ_f` is the RMS deviation
//! of foreground features from their mean, `s = √(area / N_s)` the grid
//! interval and `m` the compactness.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::resample::WorkingGrid;
use crate::error::{KccError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub n_segments: usize,
    pub compactness: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            n_segments: 8,
            compactness: 1.0,
            max_iters: 10,
            seed: 0,
        }
    }
}

/// Segment labels at working resolution; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    pub work_h: usize,
    pub work_w: usize,
    pub labels: Vec<u32>,
    pub n_actual: usize,
    pub requested: usize,
}

impl SegmentMap {
    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.work_w + col]
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_actual + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

struct Center {
    feature: Vec<f64>,
    y: f64,
    x: f64,
}

pub fn slic_segment(work: &WorkingGrid, params: &SlicParams) -> Result<SegmentMap> {
    if params.n_segments == 0 || params.max_iters == 0 {
        return Err(KccError::Invalid("n_segments and max_iters must be positive".into()));
    }
    if !params.compactness.is_finite() || params.compactness < 0.0 {
        return Err(KccError::Invalid("compactness must be finite and nonnegative".into()));
    }
    let (h, w, d) = (work.work_h, work.work_w, work.dim);
    let fg: Vec<usize> = (0..h * w).filter(|&p| work.is_foreground(p)).collect();
    if fg.is_empty() {
        return Err(KccError::NoForeground(work.image_id.clone()));
    }
    let area = fg.len();
    let interval = (area as f64 / params.n_segments as f64).sqrt().max(1.0);

    let feature_weight = {
        let mut mean = vec![0.0f64; d];
        for &p in &fg {
            for (m, &v) in mean.iter_mut().zip(work.feature(p)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= area as f64);
        let var: f64 = fg
            .iter()
            .map(|&p| sq_dist_f32(work.feature(p), &mean))
            .sum::<f64>()
            / area as f64;
        if var > 0.0 {
            1.0 / var
        } else {
            0.0
        }
    };
    let spatial_weight = params.compactness * params.compactness / (interval * interval);

    let seeds = seed_pixels(work, &fg, params.n_segments.min(area), interval, params.seed);
    let mut centers: Vec<Center> = seeds
        .iter()
        .map(|&p| Center {
            feature: work.feature(p).iter().map(|&v| v as f64).collect(),
            y: (p / w) as f64,
            x: (p % w) as f64,
        })
        .collect();

    let window = 2.0 * interval;
    let mut assignment: Vec<u32> = Vec::new();
    for _ in 0..params.max_iters {
        let next: Vec<u32> = fg
            .par_iter()
            .map(|&p| {
                let (y, x) = ((p / w) as f64, (p % w) as f64);
                let f = work.feature(p);
                let cost = |c: &Center| {
                    let dy = y - c.y;
                    let dx = x - c.x;
                    feature_weight * sq_dist_f32(f, &c.feature) + spatial_weight * (dy * dy + dx * dx)
                };
                let near = |c: &Center| (y - c.y).abs() <= window && (x - c.x).abs() <= window;
                argmin(centers.iter().enumerate().filter(|(_, c)| near(c)).map(|(k, c)| (k, cost(c))))
                    .or_else(|| argmin(centers.iter().enumerate().map(|(k, c)| (k, cost(c)))))
                    .expect("at least one center") as u32
            })
            .collect();

        let mut sums = vec![(vec![0.0f64; d], 0.0f64, 0.0f64, 0usize); centers.len()];
        for (&p, &k) in fg.iter().zip(&next) {
            let s = &mut sums[k as usize];
            for (acc, &v) in s.0.iter_mut().zip(work.feature(p)) {
                *acc += v as f64;
            }
            s.1 += (p / w) as f64;
            s.2 += (p % w) as f64;
            s.3 += 1;
        }
        for (c, (fsum, ysum, xsum, n)) in centers.iter_mut().zip(sums) {
            if n > 0 {
                let n = n as f64;
                c.feature = fsum.into_iter().map(|v| v / n).collect();
                c.y = ysum / n;
                c.x = xsum / n;
            }
        }
        let converged = next == assignment;
        assignment = next;
        if converged {
            break;
        }
    }

    let mut cluster = vec![u32::MAX; h * w];
    for (&p, &k) in fg.iter().zip(&assignment) {
        cluster[p] = k;
    }
    let labels = enforce_connectivity(&cluster, h, w, area, params.n_segments);
    let n_actual = labels.iter().copied().max().unwrap_or(0) as usize;
    Ok(SegmentMap {
        work_h: h,
        work_w: w,
        labels,
        n_actual,
        requested: params.n_segments,
    })
}

fn sq_dist_f32(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let t = x as f64 - y;
            t * t
        })
        .sum()
}

/// Lowest cost wins; ties go to the lowest index.
fn argmin(it: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, c) in it {
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k)
}

/// Staggered grid over the foreground bounding box. Grid points on the
/// background are pulled onto the nearest foreground pixel. When more than
/// `target` distinct seeds remain, an evenly strided subset is taken whose
/// phase depends on `seed`.
fn seed_pixels(work: &WorkingGrid, fg: &[usize], target: usize, interval: f64, seed: u64) -> Vec<usize> {
    let w = work.work_w;
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for &p in fg {
        let (r, c) = (p / w, p % w);
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    let (bh, bw) = ((r1 - r0 + 1) as f64, (c1 - c0 + 1) as f64);
    let rows = (bh / interval).ceil().max(1.0) as usize;
    let cols = (bw / interval).ceil().max(1.0) as usize;
    let (step_r, step_c) = (bh / rows as f64, bw / cols as f64);

    let mut on = Vec::new();
    let mut off = Vec::new();
    for i in 0..rows {
        let shift = match (cols > 1, i % 2 == 1) {
            (false, _) => 0.0,
            (true, true) => 0.25,
            (true, false) => -0.25,
        };
        for j in 0..cols {
            let y = r0 as f64 + (i as f64 + 0.5) * step_r - 0.5;
            let x = c0 as f64 + (j as f64 + 0.5 + shift) * step_c - 0.5;
            let r = (y.round().max(r0 as f64) as usize).min(r1);
            let c = (x.round().max(c0 as f64) as usize).min(c1);
            let p = r * w + c;
            if work.is_foreground(p) {
                on.push(p);
            } else {
                off.push(nearest_foreground(fg, w, y, x));
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut seeds: Vec<usize> = on.into_iter().filter(|p| seen.insert(*p)).collect();
    if seeds.len() < target {
        seeds.extend(off.into_iter().filter(|p| seen.insert(*p)));
    }
    if seeds.len() > target {
        let phase: f64 = ChaCha8Rng::seed_from_u64(seed).random();
        let n = seeds.len() as f64;
        seeds = (0..target)
            .map(|k| seeds[(((k as f64 + phase) * n / target as f64) as usize).min(seeds.len() - 1)])
            .collect();
    }
    seeds
}

fn nearest_foreground(fg: &[usize], w: usize, y: f64, x: f64) -> usize {
    let mut best = (f64::INFINITY, fg[0]);
    for &p in fg {
        let dy = (p / w) as f64 - y;
        let dx = (p % w) as f64 - x;
        let d = dy * dy + dx * dx;
        if d < best.0 {
            best = (d, p);
        }
    }
    best.1
}

struct Component {
    size: usize,
    first: usize,
    blob: usize,
    sum_y: f64,
    sum_x: f64,
}

/// 4-connected flood fill over pixels where `same(p, q)` holds.
fn flood<F: Fn(usize, usize) -> bool>(h: usize, w: usize, active: &[bool], same: F) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut id = vec![usize::MAX; h * w];
    let mut members = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !active[start] || id[start] != usize::MAX {
            continue;
        }
        let cid = members.len();
        let mut pix = Vec::new();
        id[start] = cid;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            pix.push(p);
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if active[q] && id[q] == usize::MAX && same(p, q) {
                    id[q] = cid;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        members.push(pix);
    }
    (id, members)
}

/// Turns cluster assignments into connected segments labelled `1..=n`.
///
/// Each foreground blob keeps its largest cluster component. Further
/// components of at least `area / (4 N_s)` pixels are kept, largest first,
/// while fewer than `N_s` segments exist. Everything else joins the largest
/// adjacent segment. Only when the foreground has more blobs than `N_s` does a
/// leftover component join the spatially nearest segment instead.
fn enforce_connectivity(cluster: &[u32], h: usize, w: usize, area: usize, n_segments: usize) -> Vec<u32> {
    let active: Vec<bool> = cluster.iter().map(|&k| k != u32::MAX).collect();
    let (blob_of, blob_members) = flood(h, w, &active, |_, _| true);
    let (comp_of, comp_members) = flood(h, w, &active, |p, q| cluster[p] == cluster[q]);

    let comps: Vec<Component> = comp_members
        .iter()
        .map(|pix| Component {
            size: pix.len(),
            first: pix.iter().copied().min().unwrap(),
            blob: blob_of[pix[0]],
            sum_y: pix.iter().map(|&p| (p / w) as f64).sum(),
            sum_x: pix.iter().map(|&p| (p % w) as f64).sum(),
        })
        .collect();
    let n_comps = comps.len();

    let mut adjacency = vec![BTreeSet::new(); n_comps];
    for p in 0..h * w {
        if !active[p] {
            continue;
        }
        let right = (p % w + 1 < w).then_some(p + 1);
        let down = (p / w + 1 < h).then_some(p + w);
        for q in [right, down].into_iter().flatten() {
            if active[q] && comp_of[p] != comp_of[q] {
                adjacency[comp_of[p]].insert(comp_of[q]);
                adjacency[comp_of[q]].insert(comp_of[p]);
            }
        }
    }

    // representative (largest component) of each blob
    let mut blob_rep = vec![usize::MAX; blob_members.len()];
    for (ci, c) in comps.iter().enumerate() {
        let rep = &mut blob_rep[c.blob];
        if *rep == usize::MAX || comps[*rep].size < c.size {
            *rep = ci;
        }
    }
    let mut blob_order: Vec<usize> = (0..blob_members.len()).collect();
    blob_order.sort_by(|&a, &b| blob_members[b].len().cmp(&blob_members[a].len()).then(a.cmp(&b)));

    let mut segment_of: Vec<Option<usize>> = vec![None; n_comps];
    let mut n_kept = 0;
    for &b in blob_order.iter().take(n_segments) {
        segment_of[blob_rep[b]] = Some(n_kept);
        n_kept += 1;
    }
    let min_size = area as f64 / (4 * n_segments) as f64;
    let mut by_size: Vec<usize> = (0..n_comps).collect();
    by_size.sort_by(|&a, &b| comps[b].size.cmp(&comps[a].size).then(a.cmp(&b)));
    for ci in by_size {
        if n_kept >= n_segments || (comps[ci].size as f64) < min_size {
            break;
        }
        if segment_of[ci].is_none() {
            segment_of[ci] = Some(n_kept);
            n_kept += 1;
        }
    }
    let mut seg_size = vec![0usize; n_kept];
    let mut seg_sum = vec![(0.0f64, 0.0f64); n_kept];
    for (ci, s) in segment_of.iter().enumerate() {
        if let Some(s) = *s {
            seg_size[s] += comps[ci].size;
            seg_sum[s].0 += comps[ci].sum_y;
            seg_sum[s].1 += comps[ci].sum_x;
        }
    }

    loop {
        let mut progress = true;
        while progress {
            progress = false;
            for ci in 0..n_comps {
                if segment_of[ci].is_some() {
                    continue;
                }
                let target = adjacency[ci]
                    .iter()
                    .filter_map(|&nb| segment_of[nb])
                    .min_by(|&a, &b| seg_size[b].cmp(&seg_size[a]).then(a.cmp(&b)));
                if let Some(s) = target {
                    segment_of[ci] = Some(s);
                    seg_size[s] += comps[ci].size;
                    seg_sum[s].0 += comps[ci].sum_y;
                    seg_sum[s].1 += comps[ci].sum_x;
                    progress = true;
                }
            }
        }
        let Some(ci) = (0..n_comps).find(|&ci| segment_of[ci].is_none()) else {
            break;
        };
        let cy = comps[ci].sum_y / comps[ci].size as f64;
        let cx = comps[ci].sum_x / comps[ci].size as f64;
        let nearest = (0..seg_size.len())
            .map(|s| {
                let sy = seg_sum[s].0 / seg_size[s] as f64 - cy;
                let sx = seg_sum[s].1 / seg_size[s] as f64 - cx;
                (s, sy * sy + sx * sx)
            })
            .fold(None, |best: Option<(usize, f64)>, (s, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((s, d)),
            })
            .map(|(s, _)| s)
            .expect("at least one segment is kept");
        segment_of[ci] = Some(nearest);
        seg_size[nearest] += comps[ci].size;
        seg_sum[nearest].0 += comps[ci].sum_y;
        seg_sum[nearest].1 += comps[ci].sum_x;
    }

    // final ids in row-major order of each segment's first pixel
    let mut first = vec![usize::MAX; seg_size.len()];
    for (ci, c) in comps.iter().enumerate() {
        let s = segment_of[ci].unwrap();
        first[s] = first[s].min(c.first);
    }
    let mut order: Vec<usize> = (0..seg_size.len()).collect();
    order.sort_by_key(|&s| first[s]);
    let mut final_id = vec![0u32; seg_size.len()];
    for (rank, &s) in order.iter().enumerate() {
        final_id[s] = rank as u32 + 1;
    }
    (0..h * w)
        .map(|p| {
            if active[p] {
                final_id[segment_of[comp_of[p]].unwrap()]
            } else {
                0
            }
        })
        .collect()
}
