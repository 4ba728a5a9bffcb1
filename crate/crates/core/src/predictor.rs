//! Tiny per-pixel softmax classifier over quadratic color features, used to
//! drive the predict → infer → update loop end to end.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{infer_labels, BatchFrame, InferenceParams};
use crate::loss::{class_weights, softmax, weighted_nll, ClassWeights};
use crate::model::{argmax_labels, Color, LabelMap, MotionMask, RgbImage, ScoreMap};
use crate::pipeline::{mask_iou, select_finetune_shots, FINETUNE_THRESHOLD};

pub const FEATURE_COUNT: usize = 10;
const CHECKPOINT_MAGIC: &[u8; 4] = b"MTM1";

/// `(R, G, B, R², G², B², RG, RB, GB, 1)`.
pub fn features(z: &Color) -> [f64; FEATURE_COUNT] {
    let [r, g, b] = *z;
    [r, g, b, r * r, g * g, b * b, r * g, r * b, g * b, 1.0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    weights: Vec<[f64; FEATURE_COUNT]>,
}

impl ToyModel {
    /// All-zero weights; predicts the uniform distribution.
    pub fn zeros(classes: usize) -> Self {
        Self { weights: vec![[0.0; FEATURE_COUNT]; classes] }
    }

    pub fn from_weights(weights: Vec<[f64; FEATURE_COUNT]>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidValue("model needs at least one class".into()));
        }
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::InvalidValue("non-finite model weight".into()));
        }
        Ok(Self { weights })
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[[f64; FEATURE_COUNT]] {
        &self.weights
    }

    fn logits(&self, z: &Color) -> Vec<f64> {
        let phi = features(z);
        self.weights.iter().map(|w| w.iter().zip(&phi).map(|(a, b)| a * b).sum()).collect()
    }

    /// Softmax probabilities in `f64`, pixel-major.
    pub fn probabilities(&self, img: &RgbImage) -> Vec<f64> {
        img.pixels().iter().flat_map(|z| softmax(&self.logits(z))).collect()
    }

    pub fn predict(&self, img: &RgbImage) -> ScoreMap {
        let data = self.probabilities(img).into_iter().map(|p| p as f32).collect();
        ScoreMap::new(img.width(), img.height(), self.classes(), data).expect("sizes match")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        out.extend((self.classes() as u32).to_le_bytes());
        out.extend((FEATURE_COUNT as u32).to_le_bytes());
        for w in self.weights.iter().flatten() {
            out.extend((*w as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(if bytes.len() >= 4 && &bytes[..4] != CHECKPOINT_MAGIC {
                Error::BadMagic { expected: "MTM1" }
            } else {
                Error::TruncatedFile
            });
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic { expected: "MTM1" });
        }
        let classes = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let features = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        if features != FEATURE_COUNT || classes == 0 {
            return Err(Error::BadDimensions(format!("{classes} classes x {features} features")));
        }
        let payload = &bytes[12..];
        let expected = classes * FEATURE_COUNT * 4;
        if payload.len() != expected {
            return Err(Error::SizeMismatch { expected, found: payload.len() });
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let weights = values
            .chunks_exact(FEATURE_COUNT)
            .map(|c| c.try_into().expect("feature row"))
            .collect();
        Self::from_weights(weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Scaling of the batch loss before the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// Plain sum over the batch pixels.
    Sum,
    /// Divided by the number of batch pixels.
    #[default]
    PixelMean,
}

/// How `num_l` is counted for the class weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassCountMode {
    /// Sampled frames whose video carries label `l`.
    #[default]
    Frames,
    /// Shots whose video carries label `l`.
    Shots,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Epochs of fine-tuning on the selected shots; 0 disables it.
    pub finetune_epochs: usize,
    /// Multiply the learning rate by `lr_decay_factor` every this many steps.
    pub lr_decay_every: Option<usize>,
    pub lr_decay_factor: f64,
    pub finetune_threshold: f64,
    pub class_count_mode: ClassCountMode,
    pub loss_normalization: LossNormalization,
    pub seed: u64,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            epochs: 5,
            finetune_epochs: 0,
            lr_decay_every: None,
            lr_decay_factor: 0.1,
            finetune_threshold: FINETUNE_THRESHOLD,
            class_count_mode: ClassCountMode::Frames,
            loss_normalization: LossNormalization::PixelMean,
            seed: 0,
        }
    }
}

/// Weighted NLL summed over all pixels of the batch, its gradient with
/// respect to the model weights, and the number of pixels.
pub fn batch_gradient(
    model: &ToyModel,
    batch: &[(&RgbImage, &LabelMap)],
    weights: &ClassWeights,
) -> Result<(f64, Vec<[f64; FEATURE_COUNT]>, usize)> {
    let classes = model.classes();
    let mut grad = vec![[0.0; FEATURE_COUNT]; classes];
    let mut loss = 0.0;
    let mut pixels = 0usize;
    for (img, labels) in batch {
        if img.width() != labels.width() || img.height() != labels.height() {
            return Err(Error::DimensionMismatch("image vs labels".into()));
        }
        let probs = model.probabilities(img);
        let out = weighted_nll(&probs, classes, labels.labels(), weights)?;
        loss += out.loss;
        for (z, g) in img.pixels().iter().zip(out.gradient.chunks_exact(classes)) {
            let phi = features(z);
            for (row, &gl) in grad.iter_mut().zip(g) {
                if gl != 0.0 {
                    for (acc, f) in row.iter_mut().zip(&phi) {
                        *acc += gl * f;
                    }
                }
            }
        }
        pixels += img.len();
    }
    Ok((loss, grad, pixels))
}

/// Momentum buffer of the SGD optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    velocity: Vec<[f64; FEATURE_COUNT]>,
}

impl SgdState {
    pub fn new(classes: usize) -> Self {
        Self { velocity: vec![[0.0; FEATURE_COUNT]; classes] }
    }
}

/// One momentum SGD update with weight decay:
/// `v ← μ v − η (∇ + λ θ)`, `θ ← θ + v`. Returns the batch loss before the
/// update.
pub fn sgd_step(
    model: &mut ToyModel,
    state: &mut SgdState,
    batch: &[(&RgbImage, &LabelMap)],
    weights: &ClassWeights,
    cfg: &ToyTrainConfig,
    learning_rate: f64,
) -> Result<f64> {
    let (mut loss, mut grad, pixels) = batch_gradient(model, batch, weights)?;
    if cfg.loss_normalization == LossNormalization::PixelMean && pixels > 0 {
        let scale = 1.0 / pixels as f64;
        grad.iter_mut().flatten().for_each(|v| *v *= scale);
        loss *= scale;
    }
    for ((theta, v), g) in model.weights.iter_mut().zip(&mut state.velocity).zip(&grad) {
        for k in 0..FEATURE_COUNT {
            v[k] = cfg.momentum * v[k] - learning_rate * (g[k] + cfg.weight_decay * theta[k]);
            theta[k] += v[k];
        }
    }
    Ok(loss)
}

/// Frames of one shot with its video's weak labels.
#[derive(Debug, Clone)]
pub struct TrainingShot {
    pub video: usize,
    pub images: Vec<RgbImage>,
    pub masks: Vec<MotionMask>,
    pub weak_labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub finetune: bool,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub log: Vec<EpochLog>,
    /// Per video, the shot index chosen for fine-tuning (when it ran).
    pub finetune_selection: Option<Vec<Option<usize>>>,
}

fn count_labels(shots: &[TrainingShot], mode: ClassCountMode) -> BTreeMap<u8, u64> {
    let mut counts = BTreeMap::new();
    for s in shots {
        let n = match mode {
            ClassCountMode::Frames => s.images.len() as u64,
            ClassCountMode::Shots => 1,
        };
        for &l in &s.weak_labels {
            *counts.entry(l).or_insert(0) += n;
        }
    }
    counts
}

/// Mean over frames of the IoU between motion foreground and predicted
/// (non-background argmax) foreground.
pub fn shot_overlap(model: &ToyModel, images: &[RgbImage], masks: &[MotionMask]) -> Result<f64> {
    if images.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (img, mask) in images.iter().zip(masks) {
        let predicted = argmax_labels(&model.predict(img)).foreground();
        total += mask_iou(mask, &predicted)?;
    }
    Ok(total / images.len() as f64)
}

struct Trainer<'a> {
    cfg: &'a ToyTrainConfig,
    weights: ClassWeights,
    state: SgdState,
    step: usize,
}

impl Trainer<'_> {
    fn epoch(&mut self, model: &mut ToyModel, shots: &[&TrainingShot], params: &InferenceParams, epoch: usize) -> Result<f64> {
        let mut total = 0.0;
        for (k, shot) in shots.iter().enumerate() {
            let scores: Vec<ScoreMap> = shot.images.iter().map(|img| model.predict(img)).collect();
            let batch: Vec<BatchFrame> = shot
                .images
                .iter()
                .zip(&shot.masks)
                .zip(&scores)
                .map(|((image, mask), scores)| BatchFrame { image, mask, scores })
                .collect();
            let step_params = InferenceParams {
                seed: params.seed.wrapping_add((epoch as u64) << 32).wrapping_add(k as u64),
                ..*params
            };
            let labels = infer_labels(&batch, &shot.weak_labels, &step_params)?;
            let pairs: Vec<(&RgbImage, &LabelMap)> = shot.images.iter().zip(&labels).collect();
            let lr = match self.cfg.lr_decay_every {
                Some(n) if n > 0 => self.cfg.learning_rate * self.cfg.lr_decay_factor.powi((self.step / n) as i32),
                _ => self.cfg.learning_rate,
            };
            total += sgd_step(model, &mut self.state, &pairs, &self.weights, self.cfg, lr)?;
            self.step += 1;
        }
        Ok(if shots.is_empty() { 0.0 } else { total / shots.len() as f64 })
    }
}

/// Alternates prediction, latent label inference and SGD, then optionally
/// fine-tunes on the best-overlapping shot of each video with the
/// fine-tuning inference settings.
pub fn train_loop(
    shots: &[TrainingShot],
    label_count: usize,
    params: &InferenceParams,
    cfg: &ToyTrainConfig,
) -> Result<TrainOutcome> {
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidValue("learning rate must be positive".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidValue("epochs must be at least 1".into()));
    }
    params.validate()?;
    for s in shots {
        if s.images.len() != s.masks.len() {
            return Err(Error::DimensionMismatch("images vs masks in shot".into()));
        }
        if let Some(&l) = s.weak_labels.iter().find(|&&l| l as usize >= label_count) {
            return Err(Error::LabelOutOfRange { pixel: 0, label: l, label_count });
        }
    }
    let mut model = ToyModel::zeros(label_count);
    let mut trainer = Trainer {
        cfg,
        weights: class_weights(&count_labels(shots, cfg.class_count_mode))?,
        state: SgdState::new(label_count),
        step: 0,
    };
    let all: Vec<&TrainingShot> = shots.iter().collect();
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        let mean_loss = trainer.epoch(&mut model, &all, params, epoch)?;
        log.push(EpochLog { epoch, finetune: false, mean_loss });
    }

    let mut finetune_selection = None;
    if cfg.finetune_epochs > 0 && !shots.is_empty() {
        let video_count = shots.iter().map(|s| s.video + 1).max().unwrap_or(0);
        let mut by_video: Vec<Vec<(usize, f64)>> = vec![Vec::new(); video_count];
        for (i, s) in shots.iter().enumerate() {
            by_video[s.video].push((i, shot_overlap(&model, &s.images, &s.masks)?));
        }
        let overlaps: Vec<Vec<f64>> = by_video.iter().map(|v| v.iter().map(|p| p.1).collect()).collect();
        let selection = select_finetune_shots(&overlaps, cfg.finetune_threshold);
        let chosen: Vec<&TrainingShot> = selection
            .iter()
            .zip(&by_video)
            .filter_map(|(sel, v)| sel.map(|k| &shots[v[k].0]))
            .collect();
        if !chosen.is_empty() {
            let ft_params = InferenceParams { alpha: 2.0, ..*params };
            trainer.state = SgdState::new(label_count);
            for e in 0..cfg.finetune_epochs {
                let mean_loss = trainer.epoch(&mut model, &chosen, &ft_params, cfg.epochs + e)?;
                log.push(EpochLog { epoch: cfg.epochs + e, finetune: true, mean_loss });
            }
        }
        finetune_selection = Some(selection);
    }
    Ok(TrainOutcome { model, log, finetune_selection })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pixel_image() -> RgbImage {
        RgbImage::new(2, 1, vec![[0.9, 0.1, 0.1], [0.1, 0.2, 0.8]]).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let s = ToyModel::zeros(3).predict(&two_pixel_image());
        assert!(s.values().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-7));
        crate::model::validate_score_map(&s).unwrap();
    }

    #[test]
    fn shift_invariance_and_bias_monotonicity() {
        let mut w = vec![[0.0; FEATURE_COUNT]; 2];
        w[0] = [0.3, -0.2, 0.5, 0.1, 0.0, -0.4, 0.2, 0.1, 0.0, 0.25];
        w[1] = [-0.1, 0.4, 0.0, 0.2, 0.3, 0.1, 0.0, -0.2, 0.1, 0.5];
        let img = two_pixel_image();
        let base = ToyModel::from_weights(w.clone()).unwrap();
        let shift = [0.7, -0.3, 0.2, 0.0, 1.0, 0.5, -0.5, 0.3, 0.2, 2.0];
        let shifted: Vec<_> = w.iter().map(|r| std::array::from_fn(|k| r[k] + shift[k])).collect();
        let a = base.probabilities(&img);
        let b = ToyModel::from_weights(shifted).unwrap().probabilities(&img);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut doubled = w.clone();
        doubled[1][FEATURE_COUNT - 1] *= 2.0;
        let c = ToyModel::from_weights(doubled).unwrap().probabilities(&img);
        for px in 0..2 {
            assert!(c[px * 2 + 1] > a[px * 2 + 1]);
        }
    }

    #[test]
    fn perfect_prediction_only_decays() {
        // saturating weights: pixel labels match a very confident model
        let mut w = vec![[0.0; FEATURE_COUNT]; 2];
        w[1][0] = 400.0;
        w[1][FEATURE_COUNT - 1] = -200.0;
        let mut model = ToyModel::from_weights(w.clone()).unwrap();
        let img = two_pixel_image();
        let labels = LabelMap::new(2, 1, vec![1, 0]).unwrap();
        let (_, g, _) = batch_gradient(&model, &[(&img, &labels)], &ClassWeights::uniform()).unwrap();
        assert!(g.iter().flatten().all(|v| v.abs() < 1e-30));
        let cfg = ToyTrainConfig::default();
        let mut state = SgdState::new(2);
        sgd_step(&mut model, &mut state, &[(&img, &labels)], &ClassWeights::uniform(), &cfg, cfg.learning_rate).unwrap();
        let factor = 1.0 - cfg.learning_rate * cfg.weight_decay;
        for (a, b) in model.weights().iter().flatten().zip(w.iter().flatten()) {
            assert!((a - b * factor).abs() < 1e-12);
        }
    }

    #[test]
    fn plain_sgd_is_negative_gradient() {
        let cfg = ToyTrainConfig { momentum: 0.0, weight_decay: 0.0, ..Default::default() };
        let img = two_pixel_image();
        let labels = LabelMap::new(2, 1, vec![1, 0]).unwrap();
        let mut model = ToyModel::zeros(2);
        let (_, g, pixels) = batch_gradient(&model, &[(&img, &labels)], &ClassWeights::uniform()).unwrap();
        sgd_step(&mut model, &mut SgdState::new(2), &[(&img, &labels)], &ClassWeights::uniform(), &cfg, 0.05).unwrap();
        for (w, g) in model.weights().iter().flatten().zip(g.iter().flatten()) {
            assert!((*w + 0.05 * g / pixels as f64).abs() < 1e-15);
        }

        let cfg = ToyTrainConfig { loss_normalization: LossNormalization::Sum, ..cfg };
        let mut model = ToyModel::zeros(2);
        sgd_step(&mut model, &mut SgdState::new(2), &[(&img, &labels)], &ClassWeights::uniform(), &cfg, 0.05).unwrap();
        for (w, g) in model.weights().iter().flatten().zip(g.iter().flatten()) {
            assert_eq!(*w, -0.05 * g);
        }
    }

    #[test]
    fn step_raises_true_class_score() {
        let img = RgbImage::new(1, 1, vec![[0.6, 0.3, 0.2]]).unwrap();
        let labels = LabelMap::new(1, 1, vec![2]).unwrap();
        let mut model = ToyModel::zeros(3);
        let before = model.probabilities(&img)[2];
        let cfg = ToyTrainConfig::default();
        sgd_step(&mut model, &mut SgdState::new(3), &[(&img, &labels)], &ClassWeights::uniform(), &cfg, cfg.learning_rate).unwrap();
        assert!(model.probabilities(&img)[2] > before);
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let mut w = vec![[0.0; FEATURE_COUNT]; 3];
        w[2][4] = 1.5;
        w[0][9] = -0.25;
        let m = ToyModel::from_weights(w).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"MTM1");
        assert_eq!(bytes.len(), 12 + 3 * FEATURE_COUNT * 4);
        assert_eq!(ToyModel::from_bytes(&bytes).unwrap(), m);
        assert!(matches!(ToyModel::from_bytes(&bytes[..20]), Err(Error::SizeMismatch { .. })));
        assert!(matches!(ToyModel::from_bytes(b"XTM1\0\0\0\0\0\0\0\0"), Err(Error::BadMagic { .. })));
        assert!(matches!(ToyModel::from_bytes(b"MT"), Err(Error::TruncatedFile)));
    }

    #[test]
    fn empty_dataset_returns_initial_model() {
        let out = train_loop(&[], 3, &InferenceParams::training(0), &ToyTrainConfig::default()).unwrap();
        assert_eq!(out.model, ToyModel::zeros(3));
    }
}
