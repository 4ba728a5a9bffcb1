use std::path::PathBuf;

use clap::{Args, ValueEnum};
use motionseg::coloc::{ColocParams, DEFAULT_COMPACTNESS, DEFAULT_SUPERPIXELS};
use motionseg::energy::{PairwiseParams, DEFAULT_SWEEPS};
use motionseg::gmm::DEFAULT_COMPONENTS;
use motionseg::inference::InferenceParams;
use motionseg::pipeline::{PruneParams, FINETUNE_THRESHOLD};
use motionseg::predictor::{ClassCountMode, LossNormalization, ToyTrainConfig};
use serde::Serialize;

#[derive(Debug, Clone, Args, Serialize)]
pub struct ManifestArg {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PairwiseArgs {
    /// Potts weight λ.
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    /// Contrast sensitivity γ.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Half-width of the motion-boundary band in pixels.
    #[arg(long, default_value_t = 2)]
    pub band: usize,
}

impl PairwiseArgs {
    pub fn params(&self) -> PairwiseParams {
        PairwiseParams { lambda: self.lambda, gamma: self.gamma, boundary_band: self.band }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InferenceArgs {
    /// Weight of the prediction unary (1 for training, 2 for fine-tuning).
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Minimize/refit rounds per frame.
    #[arg(long, default_value_t = 4)]
    pub iterations: usize,
    /// Mixture components per color model.
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    pub components: usize,
    /// Maximum alpha-expansion sweeps.
    #[arg(long, default_value_t = DEFAULT_SWEEPS)]
    pub sweeps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub pairwise: PairwiseArgs,
}

impl InferenceArgs {
    pub fn params(&self, seed: u64) -> InferenceParams {
        InferenceParams {
            alpha: self.alpha,
            iterations: self.iterations,
            pairwise: self.pairwise.params(),
            gmm_components: self.components,
            expansion_sweeps: self.sweeps,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PruneArgs {
    #[arg(long, default_value_t = 20)]
    pub min_frames: usize,
    /// Lowest valid per-frame foreground fraction (inclusive).
    #[arg(long, default_value_t = 0.025)]
    pub min_fg_frac: f64,
    /// Highest valid per-frame foreground fraction (inclusive).
    #[arg(long, default_value_t = 0.5)]
    pub max_fg_frac: f64,
    #[arg(long, default_value_t = 20)]
    pub min_run: usize,
}

impl PruneArgs {
    pub fn params(&self) -> PruneParams {
        PruneParams {
            min_frames: self.min_frames,
            min_fg_frac: self.min_fg_frac,
            max_fg_frac: self.max_fg_frac,
            min_run: self.min_run,
            ..PruneParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMode {
    Frames,
    Shots,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    PixelMean,
    Sum,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.0005)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    /// Epochs on the selected shots after training (0 skips fine-tuning).
    #[arg(long, default_value_t = 0)]
    pub finetune_epochs: usize,
    /// Multiply the rate by --lr-decay-factor every this many updates.
    #[arg(long)]
    pub lr_decay_every: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub lr_decay_factor: f64,
    #[arg(long, default_value_t = FINETUNE_THRESHOLD)]
    pub finetune_threshold: f64,
    /// What the class-weight counts tally.
    #[arg(long, value_enum, default_value_t = CountMode::Frames)]
    pub class_count: CountMode,
    #[arg(long, value_enum, default_value_t = Normalization::PixelMean)]
    pub loss_normalization: Normalization,
}

impl TrainArgs {
    pub fn config(&self, seed: u64) -> ToyTrainConfig {
        ToyTrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            finetune_epochs: self.finetune_epochs,
            lr_decay_every: self.lr_decay_every,
            lr_decay_factor: self.lr_decay_factor,
            finetune_threshold: self.finetune_threshold,
            class_count_mode: match self.class_count {
                CountMode::Frames => ClassCountMode::Frames,
                CountMode::Shots => ClassCountMode::Shots,
            },
            loss_normalization: match self.loss_normalization {
                Normalization::PixelMean => LossNormalization::PixelMean,
                Normalization::Sum => LossNormalization::Sum,
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ColocArgs {
    /// Target superpixel count per frame.
    #[arg(long, default_value_t = DEFAULT_SUPERPIXELS)]
    pub superpixels: usize,
    #[arg(long, default_value_t = DEFAULT_COMPACTNESS)]
    pub compactness: f64,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    pub components: usize,
    /// Potts weight λ between adjacent superpixels.
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
}

impl ColocArgs {
    pub fn params(&self, seed: u64) -> ColocParams {
        ColocParams {
            superpixels: self.superpixels,
            compactness: self.compactness,
            pairwise: PairwiseParams { lambda: self.lambda, gamma: self.gamma, ..PairwiseParams::default() },
            gmm_components: self.components,
            seed,
        }
    }
}
