//! Pixel-grid data types shared by every stage.
//!
//! All grids are row-major: pixel `(x, y)` lives at index `y * width + x`.
//! Colors are RGB normalized to `[0, 1]` per channel. Label `0` is always
//! background.

use crate::error::{Error, Result};

/// Normalized RGB color.
pub type Color = [f64; 3];

/// Tolerance on the per-pixel score sum.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-5;

/// Label index reserved for background.
pub const BACKGROUND: u8 = 0;

fn check_len(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width.checked_mul(height) != Some(len) {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {len} values for a {width}x{height} grid"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<Color>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<Color>) -> Result<Self> {
        check_len(width, height, data.len(), "image")?;
        if let Some((i, c)) = data
            .iter()
            .enumerate()
            .find(|(_, c)| c.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(Error::InvalidValue(format!(
                "pixel {i} has color {c:?} outside [0,1]"
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, color: Color) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[Color] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Color {
        self.data[y * self.width + x]
    }
}

/// Binary motion segmentation: 1 = moving foreground, 0 = background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MotionMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_len(width, height, data.len(), "mask")?;
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidValue(format!(
                "mask value {} at pixel {i} is not 0 or 1",
                data[i]
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| u8::from(f(x, y)))
            .collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.data
    }

    pub fn is_foreground(&self, index: usize) -> bool {
        self.data[index] == 1
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.foreground_count() as f64 / self.data.len() as f64
    }
}

/// Ordered category names; index 0 is background, 1..=L are objects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub const BACKGROUND_NAME: &'static str = "background";

    /// Builds a label set from object category names. Background is prepended.
    pub fn new<S: AsRef<str>>(categories: &[S]) -> Result<Self> {
        let mut names = vec![Self::BACKGROUND_NAME.to_string()];
        for c in categories {
            let c = c.as_ref();
            if names.iter().any(|n| n == c) {
                return Err(Error::InvalidValue(format!("duplicate category {c:?}")));
            }
            names.push(c.to_string());
        }
        if names.len() > 255 {
            return Err(Error::InvalidValue("at most 254 object categories".into()));
        }
        Ok(Self { names })
    }

    /// Number of labels including background.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn object_count(&self) -> usize {
        self.names.len() - 1
    }

    pub fn name(&self, label: u8) -> Option<&str> {
        self.names.get(label as usize).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<u8> {
        self.names.iter().position(|n| n == name).map(|i| i as u8)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Per-pixel semantic labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_len(width, height, data.len(), "label map")?;
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        Self { width, height, data: vec![label; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.data
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Checks every label is below `label_count`, ignoring `ignore` if given.
    pub fn check_range(&self, label_count: usize, ignore: Option<u8>) -> Result<()> {
        for (pixel, &label) in self.data.iter().enumerate() {
            if Some(label) != ignore && label as usize >= label_count {
                return Err(Error::LabelOutOfRange { pixel, label, label_count });
            }
        }
        Ok(())
    }

    /// Non-background pixels as a motion-style binary mask.
    pub fn foreground(&self) -> MotionMask {
        MotionMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&l| u8::from(l != BACKGROUND)).collect(),
        }
    }
}

/// Per-pixel class scores, channel-last.
///
/// Stored as `f32` so that the on-disk payload round-trips bit-exactly.
/// Construction does not check normalization; call [`validate_score_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ScoreMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::DimensionMismatch("score map needs at least one channel".into()));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::DimensionMismatch("score map too large".into()))?;
        if expected != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "score map: {} values for {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn uniform(width: usize, height: usize, channels: usize) -> Self {
        let v = 1.0 / channels as f32;
        Self { width, height, channels, data: vec![v; width * height * channels] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    /// Scores of one pixel across all channels.
    pub fn pixel(&self, index: usize) -> &[f32] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn score(&self, index: usize, label: u8) -> f32 {
        self.data[index * self.channels + label as usize]
    }
}

/// Checks nonnegativity and per-pixel normalization, reporting the first
/// offending pixel.
pub fn validate_score_map(scores: &ScoreMap) -> Result<()> {
    if scores.data.len() != scores.pixel_count() * scores.channels {
        return Err(Error::DimensionMismatch("score payload length".into()));
    }
    for pixel in 0..scores.pixel_count() {
        let values = scores.pixel(pixel);
        if let Some(channel) = values.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::NegativeScore { pixel, channel, value: values[channel] });
        }
        let sum: f64 = values.iter().map(|&v| f64::from(v)).sum();
        if !((sum - 1.0).abs() <= SCORE_SUM_TOLERANCE) {
            return Err(Error::NotNormalized { pixel, sum });
        }
    }
    Ok(())
}

/// Per-pixel argmax; ties go to the smallest label index.
pub fn argmax_labels(scores: &ScoreMap) -> LabelMap {
    let data = scores
        .data
        .chunks_exact(scores.channels)
        .map(|px| {
            let mut best = 0;
            for (l, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = l;
                }
            }
            best as u8
        })
        .collect();
    LabelMap { width: scores.width, height: scores.height, data }
}

/// Implicit 4-connected pixel graph.
///
/// Edges are enumerated horizontal-first: all `(i, i+1)` pairs in row-major
/// order, then all `(i, i+width)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridAdjacency {
    pub width: usize,
    pub height: usize,
}

impl GridAdjacency {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn edge_count(&self) -> usize {
        if self.width == 0 || self.height == 0 {
            return 0;
        }
        self.width * (self.height - 1) + self.height * (self.width - 1)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (w, h) = (self.width, self.height);
        let horizontal = (0..h).flat_map(move |y| (0..w.saturating_sub(1)).map(move |x| (y * w + x, y * w + x + 1)));
        let vertical = (0..h.saturating_sub(1)).flat_map(move |y| (0..w).map(move |x| (y * w + x, (y + 1) * w + x)));
        horizontal.chain(vertical)
    }

    /// 4-neighbors of pixel `index`.
    pub fn neighbors(&self, index: usize) -> impl Iterator<Item = usize> {
        let (w, h) = (self.width, self.height);
        let (x, y) = (index % w, index / w);
        [
            (x > 0).then(|| index - 1),
            (x + 1 < w).then(|| index + 1),
            (y > 0).then(|| index - w),
            (y + 1 < h).then(|| index + w),
        ]
        .into_iter()
        .flatten()
    }
}
