//! Random fixtures and brute-force reference implementations shared by the
//! integration tests. Nothing here calls into the code under test except to
//! build inputs.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use kcc_core::config::PipelineConfig;
use kcc_core::container::{Dataset, DatasetMeta, ForegroundMask, TokenGrid};
use kcc_core::gallery::{PrototypeGallery, PrototypeRecord};
use kcc_core::keypoints::{Keypoint, SegmentMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            return v;
        }
    }
}

/// `n` keypoints with segment ids 1..=n in shuffled storage order.
pub fn random_keypoints(rng: &mut ChaCha8Rng, image_id: &str, n: usize, dim: usize, class: Option<u32>) -> Vec<Keypoint> {
    let mut ids: Vec<u32> = (1..=n as u32).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    ids.into_iter()
        .map(|segment_id| Keypoint {
            image_id: image_id.to_string(),
            segment_id,
            representation: gaussian_vec(rng, dim),
            pixel_count: rng.random_range(1..50),
            centroid_work: (rng.random_range(0.0..16.0), rng.random_range(0.0..16.0)),
            centroid_input: (rng.random_range(0.0..64.0), rng.random_range(0.0..64.0)),
            class_label: class,
        })
        .collect()
}

pub fn random_gallery(rng: &mut ChaCha8Rng, n_protos: usize, max_kp: usize, dim: usize, n_classes: u32) -> PrototypeGallery {
    let config = PipelineConfig::default();
    let records = (0..n_protos)
        .map(|i| {
            let class = rng.random_range(0..n_classes);
            let id = format!("p{:03}", rng.random_range(0..1000) * 1000 + i);
            let n_kp = rng.random_range(1..=max_kp);
            PrototypeRecord {
                keypoints: random_keypoints(rng, &id, n_kp, dim, Some(class)),
                global_vector: gaussian_vec(rng, dim),
                image_id: id,
                class_label: class,
                image_path: None,
                orig_h: 64,
                orig_w: 64,
            }
        })
        .collect();
    PrototypeGallery {
        records,
        per_class: n_protos,
        classes: (0..n_classes).map(|c| format!("c{c}")).collect(),
        shortfall: BTreeMap::new(),
        fingerprint: config.fingerprint(),
        config,
    }
}

/// One mutual match as `(query segment, prototype image, prototype segment)`.
pub type Pair = (u32, String, u32);

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Quadratic mutual nearest neighbours; ties go to the earliest element of
/// the canonical orders (query by segment id, pool by class, image, segment).
pub fn brute_mutual_nn(query: &[Keypoint], candidates: &[&PrototypeRecord]) -> BTreeSet<Pair> {
    let mut q: Vec<&Keypoint> = query.iter().collect();
    q.sort_by_key(|k| k.segment_id);
    let mut pool: Vec<(u32, &str, &Keypoint)> = Vec::new();
    for r in candidates {
        for k in &r.keypoints {
            pool.push((r.class_label, &r.image_id, k));
        }
    }
    pool.sort_by(|a, b| (a.0, a.1, a.2.segment_id).cmp(&(b.0, b.1, b.2.segment_id)));

    let mut out = BTreeSet::new();
    for (i, qk) in q.iter().enumerate() {
        let mut best_j = 0;
        for j in 1..pool.len() {
            if cosine(&qk.representation, &pool[j].2.representation)
                > cosine(&qk.representation, &pool[best_j].2.representation)
            {
                best_j = j;
            }
        }
        let mut best_i = 0;
        for i2 in 1..q.len() {
            if cosine(&q[i2].representation, &pool[best_j].2.representation)
                > cosine(&q[best_i].representation, &pool[best_j].2.representation)
            {
                best_i = i2;
            }
        }
        if best_i == i {
            out.insert((qk.segment_id, pool[best_j].1.to_string(), pool[best_j].2.segment_id));
        }
    }
    out
}

/// Top-`j` image ids by repeated selection of the best remaining record.
pub fn brute_top_j(global: &[f32], gallery: &PrototypeGallery, j: usize) -> Vec<String> {
    let mut left: Vec<&PrototypeRecord> = gallery.records.iter().collect();
    let mut out = Vec::new();
    while out.len() < j && !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (si, sb) = (cosine(global, &left[i].global_vector), cosine(global, &left[best].global_vector));
            let better = si > sb
                || (si == sb && (left[i].class_label, &left[i].image_id) < (left[best].class_label, &left[best].image_id));
            if better {
                best = i;
            }
        }
        out.push(left.remove(best).image_id.clone());
    }
    out
}

/// Class counts divided by the number of labels, over `classes`.
pub fn histogram(labels: &[u32], classes: u32) -> Vec<f64> {
    let mut h = vec![0.0; classes as usize];
    for &l in labels {
        h[l as usize] += 1.0;
    }
    h.iter().map(|c| c / labels.len() as f64).collect()
}

/// Bilinear (align-corners) feature of working pixel `(i, j)`.
pub fn bilinear_feature(grid: &TokenGrid, work_h: usize, work_w: usize, i: usize, j: usize) -> Vec<f64> {
    let coord = |k: usize, out: usize, inp: usize| -> (usize, usize, f64) {
        if out <= 1 || inp <= 1 {
            return (0, 0, 0.0);
        }
        let s = k as f64 * (inp - 1) as f64 / (out - 1) as f64;
        let lo = (s.floor() as usize).min(inp - 1);
        let hi = (lo + 1).min(inp - 1);
        (lo, hi, s - lo as f64)
    };
    let (r0, r1, ty) = coord(i, work_h, grid.grid_h);
    let (c0, c1, tx) = coord(j, work_w, grid.grid_w);
    (0..grid.dim)
        .map(|d| {
            let v = |r: usize, c: usize| grid.tokens[(r * grid.grid_w + c) * grid.dim + d] as f64;
            (1.0 - ty) * ((1.0 - tx) * v(r0, c0) + tx * v(r0, c1)) + ty * ((1.0 - tx) * v(r1, c0) + tx * v(r1, c1))
        })
        .collect()
}

/// Nearest-neighbour (pixel-center) mask value of working pixel `(i, j)`.
pub fn nn_mask(mask: &ForegroundMask, work_h: usize, work_w: usize, i: usize, j: usize) -> bool {
    let r = ((2 * i + 1) * mask.height) / (2 * work_h);
    let c = ((2 * j + 1) * mask.width) / (2 * work_w);
    mask.values[r * mask.width + c] != 0
}

/// Mean working feature per segment, straight from the token grid.
pub fn masked_means(grid: &TokenGrid, seg: &SegmentMap) -> BTreeMap<u32, Vec<f64>> {
    let mut sums: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
    for i in 0..seg.work_h {
        for j in 0..seg.work_w {
            let l = seg.labels[i * seg.work_w + j];
            if l == 0 {
                continue;
            }
            let f = bilinear_feature(grid, seg.work_h, seg.work_w, i, j);
            let e = sums.entry(l).or_insert_with(|| (vec![0.0; grid.dim], 0));
            e.0.iter_mut().zip(&f).for_each(|(a, b)| *a += b);
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(l, (s, n))| (l, s.into_iter().map(|x| x / n as f64).collect()))
        .collect()
}

/// Union of 1..=3 random ellipses; never empty.
pub fn random_mask(rng: &mut ChaCha8Rng, image_id: &str, h: usize, w: usize) -> ForegroundMask {
    let mut values = vec![0u8; h * w];
    for _ in 0..rng.random_range(1..=3) {
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let ry = rng.random_range(1.0..(h as f64 / 2.0).max(1.5));
        let rx = rng.random_range(1.0..(w as f64 / 2.0).max(1.5));
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = ((y as f64 + 0.5 - cy) / ry, (x as f64 + 0.5 - cx) / rx);
                if dy * dy + dx * dx <= 1.0 {
                    values[y * w + x] = 1;
                }
            }
        }
    }
    if values.iter().all(|&v| v == 0) {
        values[rng.random_range(0..h * w)] = 1;
    }
    ForegroundMask {
        image_id: image_id.to_string(),
        height: h,
        width: w,
        values,
    }
}

pub fn random_grid(rng: &mut ChaCha8Rng, image_id: &str, with_cls: bool) -> TokenGrid {
    let grid_h = rng.random_range(1..=8);
    let grid_w = rng.random_range(1..=8);
    let dim = rng.random_range(1..=8);
    let patch_size = rng.random_range(1..=6);
    let orig_h = grid_h * patch_size - rng.random_range(0..patch_size);
    let orig_w = grid_w * patch_size - rng.random_range(0..patch_size);
    TokenGrid {
        image_id: image_id.to_string(),
        grid_h,
        grid_w,
        dim,
        tokens: (0..grid_h * grid_w * dim)
            .map(|_| StandardNormal.sample(&mut *rng))
            .collect(),
        cls_vector: with_cls.then(|| gaussian_vec(rng, dim)),
        orig_h: orig_h.max(grid_h),
        orig_w: orig_w.max(grid_w),
        patch_size,
    }
}

pub fn random_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let n = rng.random_range(1..=5);
    let mut ds = Dataset {
        meta: DatasetMeta {
            encoder_id: format!("enc-{}", rng.random_range(0..100)),
            classes: vec!["a".into(), "b".into()],
            labels: BTreeMap::new(),
            image_paths: BTreeMap::new(),
        },
        ..Dataset::default()
    };
    for i in 0..n {
        let id = format!("img{i}");
        let with_cls = rng.random_bool(0.5);
        let g = random_grid(rng, &id, with_cls);
        let m = random_mask(rng, &id, g.orig_h, g.orig_w);
        if rng.random_bool(0.8) {
            ds.meta.labels.insert(id.clone(), rng.random_range(0..2));
        }
        ds.meta.image_paths.insert(id.clone(), format!("images/{id}.png"));
        ds.grids.push(g);
        ds.masks.push(m);
    }
    ds
}
