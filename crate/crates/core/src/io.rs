//! Readers and writers for the on-disk formats.
//!
//! * RGB frames: binary PPM (`P6`, maxval 255).
//! * Motion masks and label maps: binary PGM (`P5`, maxval 255). Masks store
//!   0/255, label maps store the raw label index.
//! * Score maps: `MSF1 <height> <width> <channels>\n` followed by
//!   little-endian `f32` values, row-major, channel-last.
//! * Dataset manifest: JSON, see [`DatasetManifest`].
//!
//! Every reader works on byte slices (`decode_*`) with thin path wrappers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coloc::BoundingBox;
use crate::error::{Error, Result};
use crate::model::{LabelMap, LabelSet, MotionMask, RgbImage, ScoreMap};

const MSF_MAGIC: &str = "MSF1";

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parsed netpbm header plus the offset of the first payload byte.
struct PnmHeader {
    width: usize,
    height: usize,
    offset: usize,
}

fn parse_pnm_header(bytes: &[u8], magic: &'static str) -> Result<PnmHeader> {
    if bytes.len() < 2 {
        return Err(Error::TruncatedFile);
    }
    if &bytes[..2] != magic.as_bytes() {
        return Err(Error::BadMagic { expected: magic });
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                None => return Err(Error::TruncatedFile),
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if pos == bytes.len() {
            return Err(Error::TruncatedFile);
        }
        if start == pos {
            return Err(Error::BadDimensions(format!("non-numeric header field at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::BadDimensions("header field out of range".into()))?;
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(pos) {
        None => return Err(Error::TruncatedFile),
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(Error::BadDimensions("missing separator after maxval".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::BadDimensions(format!("{width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::BadDimensions(format!("maxval {maxval}, expected 255")));
    }
    Ok(PnmHeader { width, height, offset: pos })
}

fn pnm_payload<'a>(bytes: &'a [u8], header: &PnmHeader, channels: usize) -> Result<&'a [u8]> {
    let n = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::BadDimensions("image too large".into()))?;
    bytes.get(header.offset..header.offset + n).ok_or(Error::TruncatedFile)
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let header = parse_pnm_header(bytes, "P6")?;
    let payload = pnm_payload(bytes, &header, 3)?;
    let data = payload
        .chunks_exact(3)
        .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
        .collect();
    RgbImage::new(header.width, header.height, data)
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().flat_map(|c| c.map(quantize)));
    out
}

fn encode_pgm(width: usize, height: usize, values: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values);
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<MotionMask> {
    let header = parse_pnm_header(bytes, "P5")?;
    let payload = pnm_payload(bytes, &header, 1)?;
    let data = payload
        .iter()
        .enumerate()
        .map(|(pixel, &v)| match v {
            0 => Ok(0),
            255 => Ok(1),
            value => Err(Error::NonBinaryMask { pixel, value }),
        })
        .collect::<Result<Vec<u8>>>()?;
    MotionMask::new(header.width, header.height, data)
}

pub fn encode_mask(mask: &MotionMask) -> Vec<u8> {
    encode_pgm(mask.width(), mask.height(), mask.values().iter().map(|&v| v * 255))
}

/// Decodes a label map; values must be `< label_count` or equal `ignore`.
pub fn decode_labels(bytes: &[u8], label_count: usize, ignore: Option<u8>) -> Result<LabelMap> {
    let header = parse_pnm_header(bytes, "P5")?;
    let payload = pnm_payload(bytes, &header, 1)?;
    let map = LabelMap::new(header.width, header.height, payload.to_vec())?;
    map.check_range(label_count, ignore)?;
    Ok(map)
}

pub fn encode_labels(map: &LabelMap) -> Vec<u8> {
    encode_pgm(map.width(), map.height(), map.labels().iter().copied())
}

pub fn decode_scores(bytes: &[u8]) -> Result<ScoreMap> {
    let newline = bytes
        .iter()
        .take(128)
        .position(|&b| b == b'\n')
        .ok_or(if bytes.len() < 128 { Error::TruncatedFile } else { Error::BadMagic { expected: MSF_MAGIC } })?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::BadMagic { expected: MSF_MAGIC })?;
    let mut parts = header.split(' ');
    if parts.next() != Some(MSF_MAGIC) {
        return Err(Error::BadMagic { expected: MSF_MAGIC });
    }
    let dims: Vec<usize> = parts
        .map(|p| p.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::BadDimensions(format!("bad score header {header:?}")))?;
    let [height, width, channels] = dims[..] else {
        return Err(Error::BadDimensions(format!("bad score header {header:?}")));
    };
    if channels == 0 {
        return Err(Error::BadDimensions("zero channels".into()));
    }
    let payload = &bytes[newline + 1..];
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::BadDimensions("score map too large".into()))?;
    if payload.len() != expected {
        return Err(Error::SizeMismatch { expected, found: payload.len() });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ScoreMap::new(width, height, channels, data)
}

pub fn encode_scores(scores: &ScoreMap) -> Vec<u8> {
    let mut out = format!(
        "{MSF_MAGIC} {} {} {}\n",
        scores.height(),
        scores.width(),
        scores.channels()
    )
    .into_bytes();
    out.reserve(scores.values().len() * 4);
    for v in scores.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    decode_ppm(&read_file(path.as_ref())?)
}

pub fn write_image(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_ppm(img))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MotionMask> {
    decode_mask(&read_file(path.as_ref())?)
}

pub fn write_mask(mask: &MotionMask, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_mask(mask))
}

pub fn read_labels(path: impl AsRef<Path>, label_count: usize, ignore: Option<u8>) -> Result<LabelMap> {
    decode_labels(&read_file(path.as_ref())?, label_count, ignore)
}

pub fn write_labels(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_labels(map))
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreMap> {
    decode_scores(&read_file(path.as_ref())?)
}

pub fn write_scores(scores: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_scores(scores))
}

/// Writes raw bytes, creating parent directories.
pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    write_file(path.as_ref(), bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub image_path: PathBuf,
    pub motion_mask_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_map_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_label_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_box: Option<BoundingBox>,
}

/// Half-open frame range `[start, end)` retained by shot pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRange {
    pub start: usize,
    pub end: usize,
}

impl FrameRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotEntry {
    pub shot_id: String,
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept_range: Option<FrameRange>,
    /// Absolute indices into `frames`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_frames: Option<Vec<usize>>,
}

impl ShotEntry {
    /// Frames used for training and inference: the sampled frames if present,
    /// else the kept range, else every frame.
    pub fn working_frames(&self) -> Vec<usize> {
        if let Some(s) = &self.sampled_frames {
            s.clone()
        } else if let Some(r) = self.kept_range {
            (r.start..r.end).collect()
        } else {
            (0..self.frames.len()).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub video_id: String,
    pub weak_labels: Vec<String>,
    pub shots: Vec<ShotEntry>,
}

/// Videos, shots and frames with video-level weak labels.
///
/// `categories` lists the object categories; background is implicit at
/// label 0 and the i-th category gets label i+1. Relative paths resolve
/// against the directory holding the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub categories: Vec<String>,
    pub videos: Vec<VideoEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn label_set(&self) -> Result<LabelSet> {
        LabelSet::new(&self.categories)
    }

    /// Sorted label indices of a video's weak labels.
    pub fn weak_label_indices(&self, video: &VideoEntry) -> Result<Vec<u8>> {
        let labels = self.label_set()?;
        let mut out = video
            .weak_labels
            .iter()
            .map(|name| {
                labels
                    .index_of(name)
                    .filter(|&l| l != 0)
                    .ok_or_else(|| Error::UnknownLabel(format!("{name:?} in video {}", video.video_id)))
            })
            .collect::<Result<Vec<u8>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let labels = self.label_set().map_err(|e| Error::SchemaError(e.to_string()))?;
        if labels.index_of(LabelSet::BACKGROUND_NAME) != Some(0) {
            return Err(Error::SchemaError("\"background\" may not be listed as a category".into()));
        }
        let mut video_ids = std::collections::BTreeSet::new();
        for video in &self.videos {
            if !video_ids.insert(&video.video_id) {
                return Err(Error::SchemaError(format!("duplicate video id {}", video.video_id)));
            }
            if video.weak_labels.is_empty() {
                return Err(Error::UnknownLabel(format!("video {} has no weak labels", video.video_id)));
            }
            self.weak_label_indices(video)?;
            let mut shot_ids = std::collections::BTreeSet::new();
            for shot in &video.shots {
                if !shot_ids.insert(&shot.shot_id) {
                    return Err(Error::SchemaError(format!(
                        "duplicate shot id {} in video {}",
                        shot.shot_id, video.video_id
                    )));
                }
                if shot.frames.is_empty() {
                    return Err(Error::EmptyShot {
                        video_id: video.video_id.clone(),
                        shot_id: shot.shot_id.clone(),
                    });
                }
                let n = shot.frames.len();
                if let Some(r) = shot.kept_range {
                    if r.start >= r.end || r.end > n {
                        return Err(Error::SchemaError(format!(
                            "kept_range {}..{} invalid for shot {} with {n} frames",
                            r.start, r.end, shot.shot_id
                        )));
                    }
                }
                if let Some(s) = &shot.sampled_frames {
                    let increasing = s.windows(2).all(|w| w[0] < w[1]);
                    if s.is_empty() || !increasing || s.last().is_some_and(|&i| i >= n) {
                        return Err(Error::SchemaError(format!(
                            "sampled_frames of shot {} must be strictly increasing indices below {n}",
                            shot.shot_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::SchemaError(e.to_string()))?;
        manifest.base_dir = base_dir.into();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Rewrites relative paths so they resolve from `new_base`.
    pub fn rebase(&mut self, new_base: &Path) {
        if new_base == self.base_dir {
            return;
        }
        let old = std::path::absolute(&self.base_dir).unwrap_or_else(|_| self.base_dir.clone());
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = old.join(&*p);
            }
        };
        for frame in self.videos.iter_mut().flat_map(|v| v.shots.iter_mut()).flat_map(|s| s.frames.iter_mut()) {
            fix(&mut frame.image_path);
            fix(&mut frame.motion_mask_path);
            if let Some(p) = frame.score_map_path.as_mut() {
                fix(p);
            }
            if let Some(p) = frame.ground_truth_label_path.as_mut() {
                fix(p);
            }
        }
        self.base_dir = new_base.to_path_buf();
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = String::from_utf8(read_file(path)?).map_err(|e| Error::SchemaError(e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::from_json(&text, base)
}

/// Writes the manifest, rebasing relative paths if it moves directory.
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut m = manifest.clone();
    m.rebase(path.parent().unwrap_or(Path::new("")));
    write_file(path, m.to_json().as_bytes())
}
