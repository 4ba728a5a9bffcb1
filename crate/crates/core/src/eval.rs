//! Segmentation IoU and localization CorLoc.

use serde::{Deserialize, Serialize};

use crate::coloc::BoundingBox;
use crate::error::{Error, Result};
use crate::model::LabelMap;

/// VOC-style void label.
pub const IGNORE_LABEL: u8 = 255;
/// CorLoc counts a box only when its IoU is strictly above this.
pub const CORLOC_THRESHOLD: f64 = 0.5;

/// Per-class intersection and union counts over a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionAccumulator {
    intersection: Vec<u64>,
    union: Vec<u64>,
}

impl ConfusionAccumulator {
    pub fn new(class_count: usize) -> Self {
        Self { intersection: vec![0; class_count], union: vec![0; class_count] }
    }

    pub fn class_count(&self) -> usize {
        self.intersection.len()
    }

    pub fn intersection(&self, class: usize) -> u64 {
        self.intersection.get(class).copied().unwrap_or(0)
    }

    pub fn union(&self, class: usize) -> u64 {
        self.union.get(class).copied().unwrap_or(0)
    }

    fn grow(&mut self, len: usize) {
        if len > self.intersection.len() {
            self.intersection.resize(len, 0);
            self.union.resize(len, 0);
        }
    }

    pub fn accumulate(&mut self, predicted: &LabelMap, truth: &LabelMap, ignore: Option<u8>) -> Result<()> {
        if predicted.width() != truth.width() || predicted.height() != truth.height() {
            return Err(Error::DimensionMismatch(format!(
                "prediction {}x{} vs truth {}x{}",
                predicted.width(),
                predicted.height(),
                truth.width(),
                truth.height()
            )));
        }
        for (&p, &t) in predicted.labels().iter().zip(truth.labels()) {
            if Some(t) == ignore {
                continue;
            }
            self.grow(usize::from(p.max(t)) + 1);
            if p == t {
                self.intersection[p as usize] += 1;
                self.union[p as usize] += 1;
            } else {
                self.union[p as usize] += 1;
                self.union[t as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        self.grow(other.class_count());
        for c in 0..other.class_count() {
            self.intersection[c] += other.intersection[c];
            self.union[c] += other.union[c];
        }
    }

    /// `None` for classes never seen in either prediction or truth.
    pub fn class_iou(&self, class: usize) -> Option<f64> {
        match self.union(class) {
            0 => None,
            u => Some(self.intersection(class) as f64 / u as f64),
        }
    }

    /// Mean IoU over `classes`, skipping classes with zero union.
    pub fn mean_iou(&self, classes: &[usize]) -> Result<f64> {
        let scores: Vec<f64> = classes.iter().filter_map(|&c| self.class_iou(c)).collect();
        if scores.is_empty() {
            return Err(Error::NoClasses);
        }
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    }
}

pub fn accumulate_iou(
    mut acc: ConfusionAccumulator,
    predicted: &LabelMap,
    truth: &LabelMap,
    ignore: Option<u8>,
) -> Result<ConfusionAccumulator> {
    acc.accumulate(predicted, truth, ignore)?;
    Ok(acc)
}

pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let x0 = a.x_min.max(b.x_min);
    let y0 = a.y_min.max(b.y_min);
    let x1 = a.x_max.min(b.x_max);
    let y1 = a.y_max.min(b.y_max);
    let inter = if x0 <= x1 && y0 <= y1 { (x1 - x0 + 1) * (y1 - y0 + 1) } else { 0 };
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Percentage of pairs whose prediction exists and overlaps the truth with
/// IoU strictly above one half.
pub fn corloc(pairs: &[(Option<BoundingBox>, BoundingBox)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyList);
    }
    let hits = pairs
        .iter()
        .filter(|(p, t)| p.is_some_and(|p| box_iou(&p, t) > CORLOC_THRESHOLD))
        .count();
    Ok(100.0 * hits as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: u8,
    pub name: String,
    /// `None` when the class never occurs.
    pub value: Option<f64>,
}

/// Written by the evaluation commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub per_class: Vec<ClassScore>,
    pub mean: Option<f64>,
    pub frames: usize,
}
