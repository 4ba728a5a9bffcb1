use std::path::{Path, PathBuf};

use motionseg::io::{self, DatasetManifest, FrameEntry, ShotEntry, VideoEntry};
use motionseg::model::{validate_score_map, MotionMask, RgbImage, ScoreMap};
use motionseg::predictor::ToyModel;

use crate::error::{CliError, CliResult, Context};

/// One shot of the manifest with its position.
#[derive(Clone, Copy)]
pub struct ShotRef<'a> {
    pub video_index: usize,
    pub video: &'a VideoEntry,
    pub shot_index: usize,
    pub shot: &'a ShotEntry,
}

impl ShotRef<'_> {
    pub fn describe(&self) -> String {
        format!("video {} shot {}", self.video.video_id, self.shot.shot_id)
    }

    pub fn describe_frame(&self, frame: usize) -> String {
        format!("{} frame {frame}", self.describe())
    }

    /// Working frames with their manifest entries.
    pub fn frames(&self) -> Vec<(usize, &FrameEntry)> {
        self.shot.working_frames().into_iter().map(|i| (i, &self.shot.frames[i])).collect()
    }
}

pub fn shots(m: &DatasetManifest) -> Vec<ShotRef<'_>> {
    m.videos
        .iter()
        .enumerate()
        .flat_map(|(video_index, video)| {
            video
                .shots
                .iter()
                .enumerate()
                .map(move |(shot_index, shot)| ShotRef { video_index, video, shot_index, shot })
        })
        .collect()
}

/// Seed for one shot, derived from the run seed and the shot's position.
pub fn shot_seed(seed: u64, shot: &ShotRef) -> u64 {
    let position = ((shot.video_index as u64) << 20) | shot.shot_index as u64;
    seed.wrapping_add(position.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn stem(entry: &FrameEntry) -> String {
    entry
        .image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".into())
}

/// `<root>/<video>/<shot>/<frame stem>.<ext>`
pub fn frame_output(root: &Path, shot: &ShotRef, entry: &FrameEntry, ext: &str) -> PathBuf {
    root.join(&shot.video.video_id).join(&shot.shot.shot_id).join(format!("{}.{ext}", stem(entry)))
}

pub fn load_images(m: &DatasetManifest, shot: &ShotRef) -> CliResult<Vec<RgbImage>> {
    shot.frames()
        .into_iter()
        .map(|(i, f)| io::read_image(m.resolve(&f.image_path)).context(|| shot.describe_frame(i)))
        .collect()
}

pub fn load_masks(m: &DatasetManifest, shot: &ShotRef) -> CliResult<Vec<MotionMask>> {
    shot.frames()
        .into_iter()
        .map(|(i, f)| io::read_mask(m.resolve(&f.motion_mask_path)).context(|| shot.describe_frame(i)))
        .collect()
}

/// Predictions from the model when one is given, else the frames' score
/// map files.
pub fn load_scores(
    m: &DatasetManifest,
    shot: &ShotRef,
    images: &[RgbImage],
    model: Option<&ToyModel>,
    label_count: usize,
) -> CliResult<Vec<ScoreMap>> {
    if let Some(model) = model {
        if model.classes() != label_count {
            return Err(CliError::new(
                "DimensionMismatch",
                format!("model has {} classes, manifest has {label_count} labels", model.classes()),
            ));
        }
        return Ok(images.iter().map(|img| model.predict(img)).collect());
    }
    shot.frames()
        .into_iter()
        .map(|(i, f)| {
            let path = f.score_map_path.as_ref().ok_or_else(|| {
                CliError::usage("frame has no score_map_path; pass --model to predict scores")
            });
            let scores = path.context(|| shot.describe_frame(i))?;
            let scores = io::read_scores(m.resolve(scores)).context(|| shot.describe_frame(i))?;
            if scores.channels() != label_count {
                return Err(CliError::new(
                    "DimensionMismatch",
                    format!("score map has {} channels, manifest has {label_count} labels", scores.channels()),
                ))
                .context(|| shot.describe_frame(i));
            }
            validate_score_map(&scores).context(|| shot.describe_frame(i))?;
            Ok(scores)
        })
        .collect()
}

pub fn load_model(path: Option<&Path>) -> CliResult<Option<ToyModel>> {
    path.map(|p| ToyModel::load(p).context(|| format!("model {}", p.display()))).transpose()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::new("Serialize", e.to_string()))?;
    text.push('\n');
    io::write_bytes(path, text.as_bytes()).map_err(Into::into)
}

/// Absolute, lexically normalized form used to match frame paths.
pub fn normalize(path: &Path) -> PathBuf {
    let abs = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    let mut out = PathBuf::new();
    for c in abs.components() {
        match c {
            std::path::Component::CurDir => {}
            std::path::Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}
