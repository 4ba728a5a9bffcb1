//! Weakly-supervised video segmentation building blocks: color models,
//! graph-cut energy minimization, latent label inference from motion
//! masks, a toy per-pixel predictor with its training loop, superpixel
//! co-localization and evaluation metrics.

pub mod coloc;
pub mod energy;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod inference;
pub mod io;
pub mod loss;
pub mod maxflow;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod predictor;
pub mod synth;

pub use error::{Error, Result};
pub use model::{Color, LabelMap, LabelSet, MotionMask, RgbImage, ScoreMap, BACKGROUND};
