use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kcc_core::classifier::{predict, Prediction};
use kcc_core::config::PipelineConfig;
use kcc_core::container::{read_container, write_container};
use kcc_core::error::KccError;
use kcc_core::eval::{evaluate, run_sweep, sweep_table, SweepGrid};
use kcc_core::gallery::{build_gallery, load_gallery, save_gallery, PrototypeGallery};
use kcc_core::render::{parse_labels, render_explanation, RenderOptions};
use kcc_core::synth::{synthesize, write_preview_images, SynthSpec};

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_ABSTAINED: u8 = 4;

/// Keypoint counting classifier: build prototype galleries, classify and
/// explain queries, evaluate and sweep.
#[derive(Parser)]
#[command(name = "kcc", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract prototype keypoints from a training container.
    BuildGallery(BuildArgs),
    /// Classify one image of a container.
    Classify(ClassifyArgs),
    /// Render the explanation of one classification as SVG.
    Explain(ExplainArgs),
    /// Accuracy and complexity over a test container.
    Evaluate(EvaluateArgs),
    /// Evaluate a grid of configurations.
    Sweep(SweepArgs),
    /// Generate a synthetic container.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// Container holding the query.
    #[arg(long)]
    container: PathBuf,
    #[arg(long)]
    image_id: String,
    #[arg(long)]
    gallery: PathBuf,
    /// Must match the configuration the gallery was built with.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of prototypes kept after pruning.
    #[arg(short = 'j', long = "j")]
    j: Option<usize>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Directory the container's image paths are relative to.
    #[arg(long, default_value = ".")]
    image_root: PathBuf,
    /// JSON `{"image_id": {"segment_id": "label"}}`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    embed: bool,
    #[arg(long)]
    predicted_only: bool,
    #[arg(long)]
    show_class_names: bool,
    #[arg(long)]
    dim_unmatched: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short = 'j', long = "j")]
    j: Option<usize>,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// TOML with lists `n_segments`, `per_class`, `j`, `seeds` and a `[base]` table.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    images_per_class: usize,
    /// Tokens per side.
    #[arg(long, default_value_t = 16)]
    grid: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    patch_size: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "train")]
    split: String,
    /// Include a class token per image.
    #[arg(long)]
    cls: bool,
    /// Also write a PNG preview per image into this directory.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

enum Failure {
    Error(KccError),
    Abstained,
}

impl From<KccError> for Failure {
    fn from(e: KccError) -> Self {
        Failure::Error(e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KCC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::BuildGallery(a) => cmd_build_gallery(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Abstained) => ExitCode::from(EXIT_ABSTAINED),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_VALIDATION })
        }
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), KccError> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| KccError::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| KccError::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// The gallery's own config, checked against `--config` and with `-j` applied.
fn resolve_config(gallery: &PrototypeGallery, config: Option<&Path>, j: Option<usize>) -> Result<PipelineConfig, KccError> {
    let mut cfg = match config {
        Some(path) => {
            let cfg = PipelineConfig::load(path)?;
            gallery.check_config(&cfg)?;
            cfg
        }
        None => gallery.config.clone(),
    };
    if let Some(j) = j {
        cfg.j = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_build_gallery(a: BuildArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let (train, _) = read_container(&a.train)?;
    let gallery = build_gallery(&train, &cfg)?;
    save_gallery(&gallery, &a.output)?;

    #[derive(Serialize)]
    struct Echo<'a> {
        gallery: String,
        fingerprint: &'a str,
        records: usize,
        shortfall: &'a BTreeMap<u32, usize>,
        config: &'a PipelineConfig,
    }
    emit(
        None,
        &to_json(&Echo {
            gallery: a.output.display().to_string(),
            fingerprint: &gallery.fingerprint,
            records: gallery.records.len(),
            shortfall: &gallery.shortfall,
            config: &gallery.config,
        }),
    )?;
    Ok(())
}

fn run_query(q: &QueryArgs) -> Result<(Prediction, PrototypeGallery, kcc_core::Dataset), KccError> {
    let gallery = load_gallery(&q.gallery, None)?;
    let cfg = resolve_config(&gallery, q.config.as_deref(), q.j)?;
    let (ds, _) = read_container(&q.container)?;
    let (grid, mask) = ds.entry(&q.image_id)?;
    let pred = predict(grid, mask, &gallery, &cfg)?;
    Ok((pred, gallery, ds))
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    image_id: &'a str,
    predicted_class: Option<u32>,
    predicted_name: Option<&'a str>,
    abstained: bool,
    scores: &'a BTreeMap<u32, f64>,
    complexity: usize,
    matches: &'a [kcc_core::Match],
    diagnostic: Option<&'a str>,
}

fn cmd_classify(a: ClassifyArgs) -> CmdResult {
    let (pred, gallery, _) = run_query(&a.query)?;
    let name = pred
        .predicted_class
        .and_then(|c| gallery.classes.get(c as usize))
        .map(String::as_str);
    let text = if a.json {
        to_json(&PredictionRecord {
            image_id: &pred.query_image_id,
            predicted_class: pred.predicted_class,
            predicted_name: name,
            abstained: pred.abstained,
            scores: &pred.scores,
            complexity: pred.complexity,
            matches: &pred.match_set.matches,
            diagnostic: pred.diagnostic.as_deref(),
        })
    } else if pred.abstained {
        format!(
            "{}\tabstained\t{}\n",
            pred.query_image_id,
            pred.diagnostic.as_deref().unwrap_or("")
        )
    } else {
        let mut s = format!(
            "{}\tclass {} ({})\tmatches {}\tcomplexity {}\n",
            pred.query_image_id,
            pred.predicted_class.unwrap(),
            name.unwrap_or("?"),
            pred.match_set.len(),
            pred.complexity
        );
        for (c, score) in &pred.scores {
            s.push_str(&format!("  class {c}\t{score:.4}\n"));
        }
        s
    };
    emit(a.output.as_deref(), &text)?;
    if pred.abstained {
        return Err(Failure::Abstained);
    }
    Ok(())
}

fn cmd_explain(a: ExplainArgs) -> CmdResult {
    let (pred, gallery, ds) = run_query(&a.query)?;
    let labels = match &a.labels {
        Some(p) => Some(parse_labels(
            &std::fs::read_to_string(p).map_err(|e| KccError::Io {
                path: p.clone(),
                source: e,
            })?,
        )?),
        None => None,
    };
    let options = RenderOptions {
        embed_images: a.embed,
        show_class_names: a.show_class_names,
        predicted_only: a.predicted_only,
        dim_unmatched: a.dim_unmatched,
        image_root: a.image_root.clone(),
        ..RenderOptions::default()
    };
    let svg = render_explanation(&pred, &gallery, &ds.meta.image_paths, labels.as_ref(), &options)?;
    emit(Some(&a.output), &svg)?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CmdResult {
    let gallery = load_gallery(&a.gallery, None)?;
    let cfg = resolve_config(&gallery, a.config.as_deref(), a.j)?;
    let (test, _) = read_container(&a.test)?;
    let report = evaluate(&test, &gallery, &cfg, &a.test.display().to_string())?;
    let text = if a.json {
        to_json(&report)
    } else {
        format!(
            "accuracy {:.4}\tmean_complexity {:.4}\tabstention_rate {:.4}\t({} of {} correct, {:.2}s)\n",
            report.accuracy,
            report.mean_complexity,
            report.abstention_rate,
            report.correct,
            report.total,
            report.telemetry.wall_clock_secs
        )
    };
    emit(a.output.as_deref(), &text)?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let grid = SweepGrid::load(&a.grid)?;
    let (train, _) = read_container(&a.train)?;
    let (test, _) = read_container(&a.test)?;
    let reports = run_sweep(&train, &test, &grid, &a.test.display().to_string())?;
    let text = if a.json { to_json(&reports) } else { sweep_table(&reports) };
    emit(a.output.as_deref(), &text)?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let spec = SynthSpec {
        classes: a.classes,
        images_per_class: a.images_per_class,
        grid: a.grid,
        dim: a.dim,
        patch_size: a.patch_size,
        noise: a.noise,
        seed: a.seed,
        split: a.split,
        with_cls: a.cls,
        ..SynthSpec::default()
    };
    let ds = synthesize(&spec)?;
    write_container(&a.output, &ds)?;
    if let Some(dir) = &a.images {
        write_preview_images(&ds, dir)?;
    }
    Ok(())
}
