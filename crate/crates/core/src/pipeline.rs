//! Dataset curation: shot pruning, uniform frame sampling and fine-tune
//! shot selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{DatasetManifest, FrameRange};
use crate::model::MotionMask;

#[derive(Debug, Clone, PartialEq)]
pub struct ShotStats {
    pub shot_id: String,
    /// Foreground fraction of each frame, in time order.
    pub fg_fractions: Vec<f64>,
}

impl ShotStats {
    pub fn from_masks(shot_id: impl Into<String>, masks: &[MotionMask]) -> Self {
        Self { shot_id: shot_id.into(), fg_fractions: masks.iter().map(MotionMask::foreground_fraction).collect() }
    }

    pub fn frame_count(&self) -> usize {
        self.fg_fractions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneParams {
    pub min_frames: usize,
    pub min_fg_frac: f64,
    pub max_fg_frac: f64,
    pub min_run: usize,
    pub samples_per_shot: usize,
}

impl Default for PruneParams {
    fn default() -> Self {
        Self { min_frames: 20, min_fg_frac: 0.025, max_fg_frac: 0.50, min_run: 20, samples_per_shot: 10 }
    }
}

impl PruneParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min_fg_frac && self.min_fg_frac < self.max_fg_frac && self.max_fg_frac <= 1.0) {
            return Err(Error::InvalidValue(format!(
                "need 0 <= min_fg_frac < max_fg_frac <= 1, got {} and {}",
                self.min_fg_frac, self.max_fg_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooFewFrames,
    NoValidRun,
    RunTooShort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum PruneOutcome {
    Kept { range: FrameRange },
    Rejected { reason: RejectReason },
}

/// Keeps the longest run of consecutive frames whose foreground fraction
/// lies in `[min_fg_frac, max_fg_frac]` (earliest on ties), if the shot and
/// the run are long enough.
pub fn prune_shot(stats: &ShotStats, p: &PruneParams) -> PruneOutcome {
    if stats.frame_count() < p.min_frames {
        return PruneOutcome::Rejected { reason: RejectReason::TooFewFrames };
    }
    let mut best: Option<FrameRange> = None;
    let mut start = None;
    let valid = |f: f64| f >= p.min_fg_frac && f <= p.max_fg_frac;
    for (t, &f) in stats.fg_fractions.iter().chain(std::iter::once(&f64::NAN)).enumerate() {
        match (valid(f), start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                if best.is_none_or(|b| t - s > b.len()) {
                    best = Some(FrameRange { start: s, end: t });
                }
                start = None;
            }
            _ => {}
        }
    }
    match best {
        None => PruneOutcome::Rejected { reason: RejectReason::NoValidRun },
        Some(r) if r.len() < p.min_run => PruneOutcome::Rejected { reason: RejectReason::RunTooShort },
        Some(range) => PruneOutcome::Kept { range },
    }
}

/// Stratum midpoints `floor((k + 0.5) · len / n)` for `k = 0..n`.
pub fn sample_frames(range_length: usize, n: usize) -> Result<Vec<usize>> {
    if range_length < n {
        return Err(Error::RangeTooShort { len: range_length, needed: n });
    }
    // integer form of floor((2k + 1) · len / 2n)
    Ok((0..n).map(|k| (2 * k + 1) * range_length / (2 * n)).collect())
}

/// Threshold on mean overlap for a shot to be used in fine-tuning.
pub const FINETUNE_THRESHOLD: f64 = 0.2;

/// Per video, the index of the shot with the highest mean overlap if it is
/// at least `threshold` (earliest shot on ties).
pub fn select_finetune_shots(overlaps_by_video: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    overlaps_by_video
        .iter()
        .map(|shots| {
            let best = shots
                .iter()
                .enumerate()
                .fold(None::<(usize, f64)>, |acc, (i, &o)| match acc {
                    Some((_, b)) if b >= o => acc,
                    _ => Some((i, o)),
                })?;
            (best.1 >= threshold).then_some(best.0)
        })
        .collect()
}

/// IoU of two binary foreground masks; 0 when both are empty.
pub fn mask_iou(a: &MotionMask, b: &MotionMask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch("mask sizes differ".into()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        inter += usize::from(x == 1 && y == 1);
        union += usize::from(x == 1 || y == 1);
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Outcome of pruning one shot of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotDecision {
    pub video_id: String,
    pub shot_id: String,
    pub frame_count: usize,
    #[serde(flatten)]
    pub outcome: PruneOutcome,
}

/// Prunes every shot, given its per-frame foreground fractions (in manifest
/// order). Rejected shots and videos left without shots are dropped; kept
/// shots get `kept_range`.
pub fn prune_manifest(
    manifest: &DatasetManifest,
    fractions: &[Vec<Vec<f64>>],
    p: &PruneParams,
) -> Result<(DatasetManifest, Vec<ShotDecision>)> {
    p.validate()?;
    let mut out = manifest.clone();
    let mut decisions = Vec::new();
    out.videos.clear();
    for (video, video_fracs) in manifest.videos.iter().zip(fractions) {
        let mut kept = video.clone();
        kept.shots.clear();
        for (shot, fracs) in video.shots.iter().zip(video_fracs) {
            let stats = ShotStats { shot_id: shot.shot_id.clone(), fg_fractions: fracs.clone() };
            let outcome = prune_shot(&stats, p);
            if let PruneOutcome::Kept { range } = outcome {
                let mut s = shot.clone();
                s.kept_range = Some(range);
                s.sampled_frames = None;
                kept.shots.push(s);
            }
            decisions.push(ShotDecision {
                video_id: video.video_id.clone(),
                shot_id: shot.shot_id.clone(),
                frame_count: shot.frames.len(),
                outcome,
            });
        }
        if !kept.shots.is_empty() {
            out.videos.push(kept);
        }
    }
    Ok((out, decisions))
}

/// Adds `sampled_frames` to every shot, drawn uniformly from its kept range
/// (or all frames). Shots whose range is too short are an error.
pub fn sample_manifest(manifest: &DatasetManifest, n: usize) -> Result<DatasetManifest> {
    let mut out = manifest.clone();
    for shot in out.videos.iter_mut().flat_map(|v| v.shots.iter_mut()) {
        let range = shot.kept_range.unwrap_or(FrameRange { start: 0, end: shot.frames.len() });
        let idx = sample_frames(range.len(), n)?;
        shot.sampled_frames = Some(idx.into_iter().map(|i| i + range.start).collect());
    }
    Ok(out)
}
