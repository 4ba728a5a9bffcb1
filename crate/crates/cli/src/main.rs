//! Batch front end: manifest → pruning → sampling → latent labels →
//! toy training → co-localization → evaluation. Every command writes its
//! outputs plus a `run.json` with the resolved configuration.

mod commands;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ColocArgs, InferenceArgs, ManifestArg, PruneArgs, TrainArgs};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "motionseg", version, about = "Weakly supervised video segmentation from motion cues")]
struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Keep the longest valid run of each shot; drop shots without one.
    Prune(PruneCmd),
    /// Pick evenly spaced frames from each shot's kept range.
    Sample(SampleCmd),
    /// Estimate latent labels with the motion/prediction energy.
    Infer(InferCmd),
    /// Copy motion masks into labels (single-label videos only).
    HardAssign(ManifestCmd),
    /// Train the toy per-pixel classifier through the inference loop.
    TrainToy(TrainCmd),
    /// Choose one shot per video for fine-tuning by mask/prediction overlap.
    SelectFinetune(SelectCmd),
    /// Bounding boxes from prediction-seeded superpixel segmentation.
    Coloc(ColocCmd),
    /// Per-class and mean IoU of predicted label maps.
    EvalIou(EvalIouCmd),
    /// CorLoc of predicted boxes against manifest ground truth.
    EvalCorloc(EvalCorlocCmd),
    /// Render label maps over their frames.
    Overlay(OverlayCmd),
    /// Write a synthetic dataset with manifest.
    Synth(SynthCmd),
}

#[derive(Debug, Clone, Args, Serialize)]
struct ManifestCmd {
    #[command(flatten)]
    #[serde(flatten)]
    input: ManifestArg,
}

#[derive(Debug, Clone, Args, Serialize)]
struct PruneCmd {
    #[command(flatten)]
    #[serde(flatten)]
    input: ManifestArg,
    #[command(flatten)]
    #[serde(flatten)]
    prune: PruneArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SampleCmd {
    #[command(flatten)]
    #[serde(flatten)]
    input: ManifestArg,
    /// Frames per shot.
    #[arg(long, default_value_t = 10)]
    samples: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
struct InferCmd {
    #[command(flatten)]
    #[serde(flatten)]
    input: ManifestArg,
    /// Toy model checkpoint used for scores instead of score map files.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    inference: InferenceArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TrainCmd {
    #[command(flatten)]
    #[serde(flatten)]
    input: ManifestArg,
    #[command(flatten)]
    #[serde(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    #[serde(flatten)]
    inference: InferenceArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SelectCmd {
    #[command(flatten)]
    #[serde(flatten)]
    input: ManifestArg,
    #[arg(long)]
    model: PathBuf,
    /// Minimum mean overlap (inclusive).
    #[arg(long, default_value_t = motionseg::pipeline::FINETUNE_THRESHOLD)]
    threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ColocCmd {
    #[command(flatten)]
    #[serde(flatten)]
    input: ManifestArg,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    coloc: ColocArgs,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ClassSubset {
    /// Background and every object class.
    All,
    /// Object classes only.
    Objects,
}

#[derive(Debug, Clone, Args, Serialize)]
struct EvalIouCmd {
    /// Directory of predicted label maps (`<video>/<shot>/<stem>.pgm`).
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground truth label maps with the same relative paths.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Manifest supplying class names and, without --truth, the ground
    /// truth paths.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Number of labels including background (when no manifest is given).
    #[arg(long)]
    label_count: Option<usize>,
    /// Ground truth value excluded from scoring.
    #[arg(long)]
    ignore: Option<u8>,
    #[arg(long, value_enum, default_value_t = ClassSubset::All)]
    classes: ClassSubset,
}

#[derive(Debug, Clone, Args, Serialize)]
struct EvalCorlocCmd {
    #[command(flatten)]
    #[serde(flatten)]
    input: ManifestArg,
    /// Boxes CSV written by `coloc`.
    #[arg(long)]
    boxes: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct OverlayCmd {
    #[command(flatten)]
    #[serde(flatten)]
    input: ManifestArg,
    /// Directory of label maps (`<video>/<shot>/<stem>.pgm`).
    #[arg(long)]
    labels: PathBuf,
    /// Weight of the label color.
    #[arg(long, default_value_t = 0.5)]
    opacity: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SynthCmd {
    #[arg(long, default_value_t = 2)]
    videos: usize,
    #[arg(long, default_value_t = 24)]
    frames: usize,
    /// Object categories (at most 3).
    #[arg(long, default_value_t = 1)]
    categories: usize,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    jobs: Option<usize>,
    parallel: bool,
    out: &'a PathBuf,
    #[serde(flatten)]
    command: &'a Command,
}

fn run(cli: Cli) -> CliResult<()> {
    let out = cli.out.clone().ok_or_else(|| CliError::usage("--out is required"))?;
    if let Some(jobs) = cli.jobs {
        motionseg::par::configure_threads(jobs);
    }
    let record = RunRecord {
        tool: "motionseg",
        version: env!("CARGO_PKG_VERSION"),
        seed: cli.seed,
        jobs: cli.jobs,
        parallel: motionseg::par::is_parallel(),
        out: &out,
        command: &cli.command,
    };
    data::write_json(&out.join("run.json"), &record)?;
    let seed = cli.seed;
    match &cli.command {
        Command::Prune(c) => commands::prune(&c.input.manifest, &c.prune, &out),
        Command::Sample(c) => commands::sample(&c.input.manifest, c.samples, &out),
        Command::Infer(c) => commands::infer(&c.input.manifest, c.model.as_deref(), &c.inference, seed, &out),
        Command::HardAssign(c) => commands::hard_assign(&c.input.manifest, &out),
        Command::TrainToy(c) => commands::train_toy(&c.input.manifest, &c.train, &c.inference, seed, &out),
        Command::SelectFinetune(c) => commands::select_finetune(&c.input.manifest, &c.model, c.threshold, &out),
        Command::Coloc(c) => commands::coloc(&c.input.manifest, c.model.as_deref(), &c.coloc, seed, &out),
        Command::EvalIou(c) => commands::eval_iou(
            &commands::IouInputs {
                pred: &c.pred,
                truth: c.truth.as_deref(),
                manifest: c.manifest.as_deref(),
                label_count: c.label_count,
                ignore: c.ignore,
                objects_only: matches!(c.classes, ClassSubset::Objects),
            },
            &out,
        ),
        Command::EvalCorloc(c) => commands::eval_corloc(&c.input.manifest, &c.boxes, &out),
        Command::Overlay(c) => commands::overlay(&c.input.manifest, &c.labels, c.opacity, &out),
        Command::Synth(c) => commands::synth(c.videos, c.frames, c.categories, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.error)));
            ExitCode::from(1)
        }
    }
}
