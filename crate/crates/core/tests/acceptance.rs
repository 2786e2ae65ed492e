//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use kcc_core::classifier::{argmax_class, classify_matches, count_scores, predict, Prediction};
use kcc_core::config::PipelineConfig;
use kcc_core::container::{decode_container, encode_container, read_container, write_container, TokenGrid};
use kcc_core::eval::EvalReport;
use kcc_core::gallery::{build_gallery, PrototypeGallery, PrototypeRecord};
use kcc_core::keypoints::{extract_image, slic_segment, Keypoint, SlicParams, WorkingGrid};
use kcc_core::matching::{mutual_nn, prune_prototypes, Match, MatchSet};
use kcc_core::render::{render_explanation, KeypointLabels, RenderOptions};
use kcc_core::synth::{synthesize, SynthSpec};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pairs(m: &MatchSet) -> BTreeSet<Pair> {
    m.matches
        .iter()
        .map(|x| (x.query_segment_id, x.prototype_image_id.clone(), x.prototype_segment_id))
        .collect()
}

fn mutual_nn_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(11);
    let mut total_matches = 0;
    for case in 0..500 {
        let dim = rng.random_range(1..=16);
        let nq = rng.random_range(1..=20);
        let n = rng.random_range(1..=5);
        let g = random_gallery(&mut rng, n, 12, dim, 3);
        let query = random_keypoints(&mut rng, "q", nq, dim, None);
        let cands: Vec<&PrototypeRecord> = g.records.iter().collect();
        let got = mutual_nn(&query, &cands).map_err(|e| format!("case {case}: {e}"))?;
        let want = brute_mutual_nn(&query, &cands);
        check(pairs(&got) == want, || format!("case {case}: {:?} != {:?}", pairs(&got), want))?;
        total_matches += want.len();
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("500 instances, {total_matches} matches, {secs:.2}s"))
}

fn pruning_consistency() -> Outcome {
    let mut rng = rng(12);
    for case in 0..100 {
        let dim = rng.random_range(2..=16);
        let n = rng.random_range(1..=60);
        let g = random_gallery(&mut rng, n, 6, dim, 4);
        let global = gaussian_vec(&mut rng, dim);
        let n = rng.random_range(1..=12);
        let query = random_keypoints(&mut rng, "q", n, dim, None);

        let all = prune_prototypes(&global, &g, g.records.len()).map_err(|e| e.to_string())?;
        let unpruned: Vec<&PrototypeRecord> = g.records.iter().collect();
        let a = mutual_nn(&query, &all).map_err(|e| e.to_string())?;
        let b = mutual_nn(&query, &unpruned).map_err(|e| e.to_string())?;
        check(a.matches == b.matches, || format!("case {case}: J = |G| differs from no pruning"))?;

        for j in [1, 2, 5, g.records.len() / 2 + 1, g.records.len(), g.records.len() + 3] {
            let got: Vec<String> = prune_prototypes(&global, &g, j)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|r| r.image_id.clone())
                .collect();
            let want = brute_top_j(&global, &g, j);
            check(got == want, || format!("case {case}, J={j}: {got:?} != {want:?}"))?;
        }
    }
    Ok("100 galleries".into())
}

fn representation_fidelity() -> Outcome {
    let mut rng = rng(13);
    let mut worst = 0.0f64;
    let mut keypoints = 0;
    for case in 0..200 {
        let grid = random_grid(&mut rng, "g", false);
        let mask = random_mask(&mut rng, "g", grid.orig_h, grid.orig_w);
        let config = PipelineConfig {
            n_segments: rng.random_range(1..=12),
            scale_factor: rng.random_range(1..=4),
            seed: rng.random(),
            ..PipelineConfig::default()
        };
        let ex = match extract_image(&grid, &mask, &config, None) {
            Ok(ex) => ex,
            Err(kcc_core::KccError::NoForeground(_)) => continue,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        let (h, w) = (ex.segments.work_h, ex.segments.work_w);
        check(
            h == (grid.grid_h * config.scale_factor).min(grid.orig_h) && w == (grid.grid_w * config.scale_factor).min(grid.orig_w),
            || format!("case {case}: working size {h}x{w}"),
        )?;
        for i in 0..h {
            for j in 0..w {
                let fg = nn_mask(&mask, h, w, i, j);
                check((ex.segments.labels[i * w + j] != 0) == fg, || format!("case {case}: label/mask disagree at ({i},{j})"))?;
            }
        }
        let want = masked_means(&grid, &ex.segments);
        check(want.len() == ex.keypoints.len(), || format!("case {case}: keypoint count"))?;
        for kp in &ex.keypoints {
            let m = &want[&kp.segment_id];
            let diff: f64 = kp.representation.iter().zip(m).map(|(&a, b)| (a as f64 - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = m.iter().map(|b| b * b).sum::<f64>().sqrt();
            let rel = diff / norm.max(1e-12);
            worst = worst.max(rel);
            check(rel <= 1e-5, || format!("case {case}, segment {}: relative error {rel:e}", kp.segment_id))?;
            keypoints += 1;
        }
    }
    Ok(format!("{keypoints} keypoints, worst relative error {worst:.2e}"))
}

fn fake_match_set(labels: &[u32]) -> MatchSet {
    MatchSet {
        query_image_id: "q".into(),
        matches: labels
            .iter()
            .enumerate()
            .map(|(i, &c)| Match {
                query_segment_id: i as u32 + 1,
                prototype_image_id: format!("p{i}"),
                prototype_segment_id: 1,
                class_label: c,
                similarity: 0.5,
            })
            .collect(),
        candidate_ids: vec![],
        j: 40,
        query_keypoints: labels.len(),
        prototype_keypoints: labels.len(),
    }
}

fn rescaled(keypoints: &[Keypoint], s: f32) -> Vec<Keypoint> {
    keypoints
        .iter()
        .map(|k| Keypoint {
            representation: k.representation.iter().map(|x| x * s).collect(),
            ..k.clone()
        })
        .collect()
}

fn counting_classifier() -> Outcome {
    let mut rng = rng(14);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let classes = rng.random_range(1..=6u32);
        let labels: Vec<u32> = (0..rng.random_range(1..=40)).map(|_| rng.random_range(0..classes)).collect();
        let ids: Vec<u32> = (0..classes).collect();
        let scores = count_scores(&fake_match_set(&labels), &ids).ok_or("no scores")?;
        let sum: f64 = scores.values().sum();
        worst = worst.max((sum - 1.0).abs());
        check((sum - 1.0).abs() <= 1e-9, || format!("case {case}: scores sum to {sum}"))?;
        let want = histogram(&labels, classes);
        for (c, &h) in want.iter().enumerate() {
            check(scores[&(c as u32)] == h, || format!("case {case}: class {c} {} != {h}", scores[&(c as u32)]))?;
        }
        let best = want.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = want.iter().position(|&h| h == best).unwrap() as u32;
        check(argmax_class(&scores) == Some(first), || format!("case {case}: argmax"))?;
    }
    check(count_scores(&fake_match_set(&[]), &[0, 1]).is_none(), || "empty match set scored".into())?;

    // rescaling every representation by one positive factor
    let query_grid = TokenGrid {
        image_id: "q".into(),
        grid_h: 1,
        grid_w: 1,
        dim: 1,
        tokens: vec![1.0],
        cls_vector: None,
        orig_h: 1,
        orig_w: 1,
        patch_size: 1,
    };
    let mut suites = 0;
    for case in 0..200 {
        let dim = rng.random_range(2..=16);
        let n = rng.random_range(1..=30);
        let g = random_gallery(&mut rng, n, 8, dim, 3);
        let n = rng.random_range(1..=15);
        let query = random_keypoints(&mut rng, "q", n, dim, None);
        let global = gaussian_vec(&mut rng, dim);
        let j = rng.random_range(1..=g.records.len());
        let run = |g: &PrototypeGallery, q: &[Keypoint], glob: &[f32]| -> Result<Prediction, String> {
            let cands = prune_prototypes(glob, g, j).map_err(|e| e.to_string())?;
            let m = mutual_nn(q, &cands).map_err(|e| e.to_string())?;
            Ok(classify_matches(&query_grid, g, m, q.to_vec()))
        };
        let base = run(&g, &query, &global)?;
        for s in [0.5f32, 2.0, 1024.0, 3.7, 0.013, rng.random_range(1e-3..1e3)] {
            let mut gs = g.clone();
            for r in &mut gs.records {
                r.keypoints = rescaled(&r.keypoints, s);
                r.global_vector.iter_mut().for_each(|x| *x *= s);
            }
            let gl: Vec<f32> = global.iter().map(|x| x * s).collect();
            let p = run(&gs, &rescaled(&query, s), &gl)?;
            check(pairs(&p.match_set) == pairs(&base.match_set), || format!("case {case}, scale {s}: match sets differ"))?;
            check(p.predicted_class == base.predicted_class, || format!("case {case}, scale {s}: argmax changed"))?;
            check(p.scores == base.scores, || format!("case {case}, scale {s}: scores changed"))?;
            suites += 1;
        }
    }
    Ok(format!("1000 label vectors (worst sum error {worst:.1e}), {suites} rescalings"))
}

fn random_working_grid(rng: &mut rand_chacha::ChaCha8Rng) -> WorkingGrid {
    let h = rng.random_range(1..=40);
    let w = rng.random_range(1..=40);
    let dim = rng.random_range(1..=6);
    let mask = random_mask(rng, "w", h, w);
    WorkingGrid {
        image_id: "w".into(),
        work_h: h,
        work_w: w,
        dim,
        features: (0..h * w * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        mask: mask.values,
    }
}

fn segmentation_invariants() -> Outcome {
    let mut rng = rng(15);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().map_err(|e| e.to_string())?;
    for case in 0..100 {
        let work = random_working_grid(&mut rng);
        let params = SlicParams {
            n_segments: rng.random_range(1..=16),
            compactness: rng.random_range(0.1..10.0),
            max_iters: rng.random_range(1..=10),
            seed: rng.random(),
        };
        let a = slic_segment(&work, &params).map_err(|e| format!("case {case}: {e}"))?;
        let b = slic_segment(&work, &params).map_err(|e| e.to_string())?;
        let c = one.install(|| slic_segment(&work, &params)).map_err(|e| e.to_string())?;
        let d = many.install(|| slic_segment(&work, &params)).map_err(|e| e.to_string())?;
        check(a == b && a == c && a == d, || format!("case {case}: runs differ"))?;

        let fg = work.foreground_count();
        check(a.n_actual >= 1 && a.n_actual <= params.n_segments.min(fg), || {
            format!("case {case}: n_actual {} with N_s {} and {fg} foreground pixels", a.n_actual, params.n_segments)
        })?;
        let mut seen = BTreeSet::new();
        for (p, &l) in a.labels.iter().enumerate() {
            check((l != 0) == (work.mask[p] != 0), || format!("case {case}: pixel {p} label {l} vs mask"))?;
            check(l as usize <= a.n_actual, || format!("case {case}: label {l} out of range"))?;
            if l != 0 {
                seen.insert(l);
            }
        }
        check(seen.len() == a.n_actual, || format!("case {case}: {} labels used of {}", seen.len(), a.n_actual))?;
    }
    Ok("100 grids, 1 and 8 threads".into())
}

fn self_match() -> Outcome {
    let spec = SynthSpec {
        noise: 0.0,
        ..SynthSpec::default()
    };
    let train = synthesize(&spec).map_err(|e| e.to_string())?;
    let config = PipelineConfig::default();
    let gallery = build_gallery(&train, &config).map_err(|e| e.to_string())?;
    let mut correct = 0;
    let mut self_pairs = 0;
    for r in &gallery.records {
        let (grid, mask) = train.entry(&r.image_id).map_err(|e| e.to_string())?;
        let p = predict(grid, mask, &gallery, &config).map_err(|e| e.to_string())?;
        if p.predicted_class == Some(r.class_label) {
            correct += 1;
        }
        let own: Vec<&Match> = p
            .match_set
            .matches
            .iter()
            .filter(|m| m.prototype_image_id == r.image_id && m.prototype_segment_id == m.query_segment_id)
            .collect();
        check(!own.is_empty(), || format!("{}: no self pairing", r.image_id))?;
        for m in &own {
            check((m.similarity - 1.0).abs() <= 1e-9, || format!("{}: self similarity {}", r.image_id, m.similarity))?;
        }
        self_pairs += own.len();
    }
    let acc = correct as f64 / gallery.records.len() as f64;
    check(acc == 1.0, || format!("self accuracy {acc}"))?;
    Ok(format!("{} prototypes, accuracy 1.0, {self_pairs} self pairings", gallery.records.len()))
}

fn kcc(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kcc"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("kcc {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn synthetic_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let start = Instant::now();
    for split in ["train", "test"] {
        kcc(&["synth", "--classes", "3", "--images-per-class", "20", "--noise", "0.3", "--split", split, "--output", &p(&format!("{split}.kcc"))])?;
    }
    std::fs::write(p("config.toml"), "per_class = 10\nn_segments = 8\nj = 30\n").map_err(|e| e.to_string())?;
    kcc(&["build-gallery", "--train", &p("train.kcc"), "--config", &p("config.toml"), "--output", &p("g.kccg")])?;
    let json = kcc(&["evaluate", "--test", &p("test.kcc"), "--gallery", &p("g.kccg"), "--json"])?;
    let secs = start.elapsed().as_secs_f64();
    let report: EvalReport = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    check(report.total == 60, || format!("{} test images", report.total))?;
    check(report.config.j == 30 && report.config.per_class == 10 && report.config.n_segments == 8, || "config not applied".into())?;
    check(report.accuracy >= 0.95, || format!("accuracy {:.4}", report.accuracy))?;
    check((1.0..=10.0).contains(&report.mean_complexity), || format!("mean complexity {:.3}", report.mean_complexity))?;
    check(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "accuracy {:.4}, mean complexity {:.2}, {secs:.1}s",
        report.accuracy, report.mean_complexity
    ))
}

fn payload_start(bytes: &[u8]) -> usize {
    20 + u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize
}

fn format_robustness() -> Outcome {
    let mut rng = rng(16);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut corruptions = 0;
    for file in 0..50 {
        let ds = random_dataset(&mut rng);
        let path = dir.path().join(format!("f{file}.kcc"));
        write_container(&path, &ds).map_err(|e| e.to_string())?;
        let clean = std::fs::read(&path).map_err(|e| e.to_string())?;
        let start = payload_start(&clean);
        for _ in 0..20 {
            let pos = rng.random_range(start..clean.len());
            let mut bad = clean.clone();
            bad[pos] ^= rng.random_range(1..=255u8);
            std::fs::write(&path, &bad).map_err(|e| e.to_string())?;
            check(read_container(&path).is_err(), || format!("file {file}: flip at byte {pos} undetected"))?;
            corruptions += 1;
        }
    }
    for case in 0..100 {
        let ds = random_dataset(&mut rng);
        let path = dir.path().join("rt.kcc");
        write_container(&path, &ds).map_err(|e| e.to_string())?;
        let (back, _) = read_container(&path).map_err(|e| e.to_string())?;
        check(back == ds, || format!("case {case}: dataset changed"))?;
        let a = std::fs::read(&path).map_err(|e| e.to_string())?;
        let b = encode_container(&back).map_err(|e| e.to_string())?;
        check(a == b, || format!("case {case}: re-encoding differs"))?;
        let (again, _) = decode_container(&b).map_err(|e| e.to_string())?;
        for (x, y) in again.grids.iter().zip(&ds.grids) {
            let bits = |t: &[f32]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            check(bits(&x.tokens) == bits(&y.tokens), || format!("case {case}: token bits differ"))?;
        }
    }
    Ok(format!("{corruptions} corruptions over 50 files all detected, 100 round trips exact"))
}

fn kp(image: &str, seg: u32, row: f64, col: f64) -> Keypoint {
    Keypoint {
        image_id: image.into(),
        segment_id: seg,
        representation: vec![1.0, seg as f32],
        pixel_count: 10,
        centroid_work: (row / 4.0, col / 4.0),
        centroid_input: (row, col),
        class_label: None,
    }
}

fn golden_gallery() -> PrototypeGallery {
    let config = PipelineConfig::default();
    let rec = |id: &str, class: u32, h: usize, w: usize, kps: Vec<Keypoint>| PrototypeRecord {
        image_id: id.into(),
        class_label: class,
        keypoints: kps,
        global_vector: vec![1.0, 0.0],
        image_path: Some(format!("{id}.png")),
        orig_h: h,
        orig_w: w,
    };
    PrototypeGallery {
        records: vec![
            rec("proto-a", 0, 64, 64, vec![kp("proto-a", 1, 10.0, 12.0), kp("proto-a", 2, 40.0, 30.0), kp("proto-a", 3, 50.0, 55.0)]),
            rec("proto-b", 0, 64, 96, vec![kp("proto-b", 1, 20.0, 70.0), kp("proto-b", 2, 33.5, 8.25)]),
            rec("proto-c", 1, 48, 48, vec![kp("proto-c", 1, 5.0, 5.0), kp("proto-c", 2, 24.0, 40.0)]),
        ],
        per_class: 2,
        classes: vec!["heron & egret".into(), "<plover>".into()],
        shortfall: BTreeMap::new(),
        fingerprint: config.fingerprint(),
        config,
    }
}

fn golden_prediction(abstain: bool) -> Prediction {
    let query = vec![
        kp("query", 1, 8.0, 8.0),
        kp("query", 2, 30.0, 20.0),
        kp("query", 3, 45.0, 50.0),
        kp("query", 4, 60.0, 10.0),
        kp("query", 5, 12.0, 60.0),
    ];
    let m = |q: u32, img: &str, s: u32, c: u32, sim: f64| Match {
        query_segment_id: q,
        prototype_image_id: img.into(),
        prototype_segment_id: s,
        class_label: c,
        similarity: sim,
    };
    let matches = if abstain {
        vec![]
    } else {
        vec![
            m(1, "proto-a", 1, 0, 0.97),
            m(2, "proto-a", 2, 0, 0.91),
            m(3, "proto-b", 2, 0, 0.88),
            m(4, "proto-c", 2, 1, 0.80),
        ]
    };
    let match_set = MatchSet {
        query_image_id: "query".into(),
        matches,
        candidate_ids: vec!["proto-a".into(), "proto-b".into(), "proto-c".into()],
        j: 40,
        query_keypoints: query.len(),
        prototype_keypoints: 7,
    };
    let (scores, predicted_class, complexity) = if abstain {
        (BTreeMap::new(), None, 0)
    } else {
        (BTreeMap::from([(0, 0.75), (1, 0.25)]), Some(0), 2)
    };
    Prediction {
        query_image_id: "query".into(),
        scores,
        predicted_class,
        abstained: abstain,
        complexity,
        match_set,
        query_keypoints: query,
        query_size: (64, 80),
        diagnostic: abstain.then(|| "no mutual matches".into()),
    }
}

fn b64(s: &str) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(s)
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn renderer_goldens() -> Outcome {
    let images = tempfile::tempdir().map_err(|e| e.to_string())?;
    for id in ["query", "proto-a", "proto-b", "proto-c"] {
        std::fs::write(images.path().join(format!("{id}.png")), format!("not really a png: {id}")).map_err(|e| e.to_string())?;
    }
    let gallery = golden_gallery();
    let paths = BTreeMap::from([("query".to_string(), "query.png".to_string())]);
    let base = RenderOptions {
        image_root: images.path().to_path_buf(),
        ..RenderOptions::default()
    };
    // one label per drawn marker, with markup that needs escaping
    let labels: KeypointLabels = [
        ("query", 1, "beak"),
        ("query", 2, "wing"),
        ("query", 3, "leg \"left\""),
        ("query", 4, "tail"),
        ("proto-a", 1, "beak"),
        ("proto-a", 2, "wing"),
        ("proto-b", 2, "leg <l>"),
        ("proto-c", 2, "tail & tip"),
    ]
    .into_iter()
    .map(|(img, seg, text)| ((img.to_string(), seg), text.to_string()))
    .collect();
    let cases: [(&str, Prediction, Option<&KeypointLabels>, RenderOptions); 3] = [
        ("basic", golden_prediction(false), None, base.clone()),
        ("abstained", golden_prediction(true), None, base.clone()),
        (
            "annotated",
            golden_prediction(false),
            Some(&labels),
            RenderOptions {
                embed_images: true,
                show_class_names: true,
                dim_unmatched: true,
                panel_height: 160.0,
                ..base.clone()
            },
        ),
    ];
    let update = std::env::var_os("KCC_UPDATE_GOLDENS").is_some_and(|v| v == "1");
    for (name, pred, labels, options) in &cases {
        let svg = render_explanation(pred, &gallery, &paths, *labels, options).map_err(|e| format!("{name}: {e}"))?;
        let again = render_explanation(pred, &gallery, &paths, *labels, options).map_err(|e| e.to_string())?;
        check(svg == again, || format!("{name}: not deterministic"))?;

        let drawn: Vec<&Match> = pred
            .match_set
            .matches
            .iter()
            .filter(|m| !options.predicted_only || Some(m.class_label) == pred.predicted_class)
            .collect();
        let protos: BTreeSet<&str> = drawn.iter().map(|m| m.prototype_image_id.as_str()).collect();
        let count = |needle: &str| svg.matches(needle).count();
        check(count("class=\"match\"") == drawn.len(), || format!("{name}: {} lines for {} matches", count("class=\"match\""), drawn.len()))?;
        check(count("class=\"marker\"") == 2 * drawn.len(), || format!("{name}: marker count"))?;
        check(count("<g class=\"panel\"") == 1 + protos.len(), || format!("{name}: panel count"))?;
        check((count("class=\"banner\"") == 1) == drawn.is_empty(), || format!("{name}: banner"))?;
        if labels.is_some() {
            check(count("class=\"label\"") == 2 * drawn.len(), || format!("{name}: label count"))?;
            let order: Vec<usize> = ["proto-a", "proto-b", "proto-c"]
                .iter()
                .map(|id| svg.find(&format!("base64,{}", b64(&format!("not really a png: {id}")))).unwrap_or(usize::MAX))
                .collect();
            check(order.windows(2).all(|w| w[0] < w[1]), || format!("{name}: panels not in match-count order"))?;
        }

        let file = golden_dir().join(format!("{name}.svg"));
        if update {
            std::fs::create_dir_all(golden_dir()).map_err(|e| e.to_string())?;
            std::fs::write(&file, &svg).map_err(|e| e.to_string())?;
        }
        let want = std::fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
        check(svg == want, || format!("{name}: differs from {}", file.display()))?;
    }
    Ok("3 goldens byte-identical, cardinalities consistent".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("mutual nearest neighbours equal brute-force oracle", mutual_nn_oracle),
        ("pruning consistency", pruning_consistency),
        ("keypoint representation is the masked mean", representation_fidelity),
        ("counting classifier", counting_classifier),
        ("segmentation invariants", segmentation_invariants),
        ("self-match property", self_match),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("container format robustness", format_robustness),
        ("renderer goldens", renderer_goldens),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match std::panic::catch_unwind(f) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
