//! Class-balanced cross-entropy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LabelMap, ScoreMap, BACKGROUND};

/// Per-label loss weights; background and unlisted labels weigh 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    weights: BTreeMap<u8, f64>,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        Self { weights: BTreeMap::new() }
    }

    pub fn get(&self, label: u8) -> f64 {
        if label == BACKGROUND {
            return 1.0;
        }
        self.weights.get(&label).copied().unwrap_or(1.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, f64)> + '_ {
        self.weights.iter().map(|(&l, &w)| (l, w))
    }
}

/// `w_l = min_j num_j / num_l` over the object labels present in `counts`.
pub fn class_weights(counts: &BTreeMap<u8, u64>) -> Result<ClassWeights> {
    if let Some((&l, _)) = counts.iter().find(|(_, &c)| c == 0) {
        return Err(Error::ZeroCount(l));
    }
    if counts.contains_key(&BACKGROUND) {
        return Err(Error::InvalidValue("background has a fixed weight of 1".into()));
    }
    let min = counts.values().copied().min().unwrap_or(1) as f64;
    Ok(ClassWeights {
        weights: counts.iter().map(|(&l, &c)| (l, min / c as f64)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// d loss / d logit, pixel-major, channel-last.
    pub gradient: Vec<f64>,
}

/// Weighted NLL on raw probabilities (`channels` per pixel) with the
/// gradient taken with respect to the pre-softmax logits:
/// `loss = −Σ_i w_{x_i} ln p_i^{x_i}`, `∂/∂a_i^l = w_{x_i} (p_i^l − [l = x_i])`.
pub fn weighted_nll(probs: &[f64], channels: usize, labels: &[u8], weights: &ClassWeights) -> Result<LossOutput> {
    if channels == 0 || probs.len() != labels.len() * channels {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities for {} pixels x {channels} channels",
            probs.len(),
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut gradient = Vec::with_capacity(probs.len());
    for (px, &x) in probs.chunks_exact(channels).zip(labels) {
        if x as usize >= channels {
            return Err(Error::LabelOutOfRange { pixel: gradient.len() / channels, label: x, label_count: channels });
        }
        let w = weights.get(x);
        loss -= w * px[x as usize].ln();
        gradient.extend(px.iter().enumerate().map(|(l, &p)| w * (p - f64::from(u8::from(l == x as usize)))));
    }
    Ok(LossOutput { loss, gradient })
}

pub fn weighted_nll_loss(scores: &ScoreMap, labels: &LabelMap, weights: &ClassWeights) -> Result<LossOutput> {
    if scores.width() != labels.width() || scores.height() != labels.height() {
        return Err(Error::DimensionMismatch("scores vs labels".into()));
    }
    let probs: Vec<f64> = scores.values().iter().map(|&v| f64::from(v)).collect();
    weighted_nll(&probs, scores.channels(), labels.labels(), weights)
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|a| (a - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
