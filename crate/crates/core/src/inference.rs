//! Latent label estimation for a batch of frames from one shot.
//!
//! Per frame: fit color models from the distance-weighted motion masks of
//! the batch, then alternate energy minimization with re-estimating the
//! color models from the current labeling.

use serde::{Deserialize, Serialize};

use crate::energy::{build_energy, BoundaryBand, EnergyModel, PairwiseParams, DEFAULT_SWEEPS};
use crate::error::{Error, Result};
use crate::gmm::{fit_pair, motion_samples, WeightedPixelSample, DEFAULT_COMPONENTS};
use crate::model::{LabelMap, MotionMask, RgbImage, ScoreMap, BACKGROUND};
use crate::par;

/// Weight of the original motion samples when refitting from a labeling.
pub const MOTION_RETAIN_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceParams {
    pub alpha: f64,
    pub iterations: usize,
    pub pairwise: PairwiseParams,
    pub gmm_components: usize,
    pub expansion_sweeps: usize,
    pub seed: u64,
}

impl InferenceParams {
    /// Settings used while training on the full dataset.
    pub fn training(seed: u64) -> Self {
        Self {
            alpha: 1.0,
            iterations: 4,
            pairwise: PairwiseParams::default(),
            gmm_components: DEFAULT_COMPONENTS,
            expansion_sweeps: DEFAULT_SWEEPS,
            seed,
        }
    }

    /// Settings used for fine-tuning on selected shots.
    pub fn finetune(seed: u64) -> Self {
        Self { alpha: 2.0, ..Self::training(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidValue(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidValue("iterations must be at least 1".into()));
        }
        if self.gmm_components == 0 {
            return Err(Error::InvalidValue("gmm_components must be at least 1".into()));
        }
        self.pairwise.validate()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchFrame<'a> {
    pub image: &'a RgbImage,
    pub mask: &'a MotionMask,
    pub scores: &'a ScoreMap,
}

/// One round of minimize-then-refit for a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Energy of the new labeling under this round's model.
    pub energy: f64,
    /// Energy of the previous round's labeling under this round's model.
    pub previous_energy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FrameInference {
    pub labels: LabelMap,
    pub rounds: Vec<IterationRecord>,
}

fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn check_batch(batch: &[BatchFrame], weak_labels: &[u8]) -> Result<()> {
    if weak_labels.is_empty() || weak_labels.contains(&BACKGROUND) {
        return Err(Error::InvalidValue("weak labels must be nonempty and exclude background".into()));
    }
    let Some(first) = batch.first() else {
        return Err(Error::InvalidValue("empty batch".into()));
    };
    let (w, h) = (first.image.width(), first.image.height());
    for (t, f) in batch.iter().enumerate() {
        let dims = [
            (f.image.width(), f.image.height()),
            (f.mask.width(), f.mask.height()),
            (f.scores.width(), f.scores.height()),
        ];
        if dims.iter().any(|&d| d != (w, h)) {
            return Err(Error::DimensionMismatch(format!("frame {t} differs from the {w}x{h} batch")));
        }
        if let Some(&l) = weak_labels.iter().find(|&&l| l as usize >= f.scores.channels()) {
            return Err(Error::DimensionMismatch(format!(
                "weak label {l} has no score channel in frame {t}"
            )));
        }
    }
    Ok(())
}

fn minimize(model: &EnergyModel, init: Option<&LabelMap>, sweeps: usize) -> Result<LabelMap> {
    if model.labels().len() == 2 {
        crate::energy::minimize_binary(model)
    } else {
        let start = match init {
            Some(x) => x.clone(),
            None => model.unary_argmin(),
        };
        crate::energy::minimize_expansion(model, &start, sweeps)
    }
}

/// Runs the alternating estimator for frame `target` of the batch.
pub fn infer_frame(
    batch: &[BatchFrame],
    target: usize,
    weak_labels: &[u8],
    params: &InferenceParams,
) -> Result<FrameInference> {
    check_batch(batch, weak_labels)?;
    params.validate()?;
    let pairs: Vec<(&RgbImage, &MotionMask)> = batch.iter().map(|f| (f.image, f.mask)).collect();
    let (motion_fg, motion_bg) = motion_samples(&pairs, target)?;
    let seed = frame_seed(params.seed, target);
    let mut gmms = fit_pair(&motion_fg, &motion_bg, params.gmm_components, seed)?;

    let frame = batch[target];
    let band = BoundaryBand::from_mask(frame.mask, params.pairwise.boundary_band);
    let mut allowed = vec![BACKGROUND];
    allowed.extend_from_slice(weak_labels);

    let mut previous: Option<LabelMap> = None;
    let mut rounds = Vec::with_capacity(params.iterations);
    for round in 0..params.iterations {
        let model = build_energy(frame.image, &gmms, frame.scores, &allowed, params.alpha, &params.pairwise, &band)?;
        let labels = minimize(&model, previous.as_ref(), params.expansion_sweeps)?;
        let record = IterationRecord {
            energy: crate::energy::total_energy(&model, &labels)?,
            previous_energy: previous
                .as_ref()
                .map(|p| crate::energy::total_energy(&model, p))
                .transpose()?,
        };
        if labels.labels().iter().all(|&l| l == BACKGROUND) {
            if previous.is_some() {
                // collapsed to background; keep the last nontrivial labeling
                break;
            }
            rounds.push(record);
            previous = Some(labels);
            break;
        }
        rounds.push(record);
        if round + 1 < params.iterations {
            let mut fg: Vec<WeightedPixelSample> = Vec::new();
            let mut bg: Vec<WeightedPixelSample> = Vec::new();
            for (z, &l) in frame.image.pixels().iter().zip(labels.labels()) {
                let s = WeightedPixelSample::new(*z, 1.0);
                if l == BACKGROUND {
                    bg.push(s);
                } else {
                    fg.push(s);
                }
            }
            let retain = |s: &WeightedPixelSample| WeightedPixelSample::new(s.color, s.weight * MOTION_RETAIN_WEIGHT);
            fg.extend(motion_fg.iter().map(retain));
            bg.extend(motion_bg.iter().map(retain));
            gmms = fit_pair(&fg, &bg, params.gmm_components, seed.wrapping_add(2 * (round as u64 + 1)))?;
        }
        previous = Some(labels);
    }
    Ok(FrameInference { labels: previous.expect("at least one round"), rounds })
}

/// Latent labels for every frame of the batch. Frames are solved in
/// parallel; each frame's result depends only on the inputs and the seed.
pub fn infer_labels(batch: &[BatchFrame], weak_labels: &[u8], params: &InferenceParams) -> Result<Vec<LabelMap>> {
    check_batch(batch, weak_labels)?;
    params.validate()?;
    par::try_map_range(batch.len(), |t| infer_frame(batch, t, weak_labels, params).map(|f| f.labels))
}

/// Copies motion masks into labels: the single weak label on foreground,
/// background elsewhere.
pub fn hard_assign(masks: &[&MotionMask], weak_labels: &[u8]) -> Result<Vec<LabelMap>> {
    let [label] = weak_labels else {
        return Err(Error::MultiLabelVideo(weak_labels.len()));
    };
    if *label == BACKGROUND {
        return Err(Error::InvalidValue("weak label may not be background".into()));
    }
    masks
        .iter()
        .map(|m| {
            let data = m.values().iter().map(|&s| if s == 1 { *label } else { BACKGROUND }).collect();
            LabelMap::new(m.width(), m.height(), data)
        })
        .collect()
}
