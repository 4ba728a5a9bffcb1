//! Deterministic synthetic scenes: a colored blob moving over a textured
//! background, its exact labels, a corrupted motion mask and predictor
//! scores that agree with the labels. Used by tests, benchmarks and the
//! `synth` command.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coloc::BoundingBox;
use crate::coloc::largest_component_box;
use crate::error::Result;
use crate::io::{self, DatasetManifest, FrameEntry, ShotEntry, VideoEntry};
use crate::model::{Color, LabelMap, MotionMask, RgbImage, ScoreMap, BACKGROUND};
use crate::pipeline::mask_iou;
use crate::predictor::TrainingShot;

/// Object colors by category (index 0 unused).
pub const CATEGORY_COLORS: [Color; 4] = [[0.0; 3], [0.85, 0.2, 0.15], [0.2, 0.8, 0.25], [0.9, 0.8, 0.2]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub category: u8,
    /// Channels of the generated score maps (background included).
    pub label_count: usize,
    /// Probability given to the true label in the score maps.
    pub score_confidence: f32,
    /// Motion masks are shifted until their IoU with the truth is as close
    /// as possible to this.
    pub mask_iou_target: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(category: u8, label_count: usize, seed: u64) -> Self {
        Self {
            width: 40,
            height: 30,
            frames: 4,
            category,
            label_count,
            score_confidence: 0.65,
            mask_iou_target: 0.5,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticShot {
    pub images: Vec<RgbImage>,
    pub truth: Vec<LabelMap>,
    pub masks: Vec<MotionMask>,
    pub scores: Vec<ScoreMap>,
}

impl SyntheticShot {
    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.truth.iter().map(|t| largest_component_box(t).expect("object is visible")).collect()
    }
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn jitter(rng: &mut ChaCha8Rng, c: Color, amount: f64) -> Color {
    c.map(|v| quantize(v + rng.random_range(-amount..=amount)))
}

/// Per-pixel noise drawn from a few fixed levels per channel, so repeated
/// colors are common.
fn pixel_noise(rng: &mut ChaCha8Rng, c: Color) -> Color {
    const LEVELS: [f64; 4] = [-9.0 / 255.0, -3.0 / 255.0, 3.0 / 255.0, 9.0 / 255.0];
    c.map(|v| quantize(v + LEVELS[rng.random_range(0..LEVELS.len())]))
}

fn shifted(mask: &MotionMask, dx: isize, dy: isize) -> MotionMask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    MotionMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (sx, sy) = (x as isize - dx, y as isize - dy);
        (0..w).contains(&sx) && (0..h).contains(&sy) && mask.is_foreground((sy * w + sx) as usize)
    })
}

/// Renders one scene.
pub fn scene(spec: &SceneSpec) -> SyntheticShot {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let (wf, hf) = (w as f64, h as f64);
    let bg_a = jitter(&mut rng, [0.25, 0.4, 0.7], 0.08);
    let bg_b = jitter(&mut rng, [0.35, 0.5, 0.6], 0.08);
    let fg = jitter(&mut rng, CATEGORY_COLORS[spec.category as usize % CATEGORY_COLORS.len()], 0.05);
    let rx = wf * rng.random_range(0.22..0.3);
    let ry = hf * rng.random_range(0.25..0.33);
    let start = (rng.random_range(rx..wf - rx), rng.random_range(ry..hf - ry));
    let velocity = (rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0));
    let stripe = rng.random_range(3..7);

    let mut out = SyntheticShot { images: Vec::new(), truth: Vec::new(), masks: Vec::new(), scores: Vec::new() };
    for t in 0..spec.frames {
        let cx = (start.0 + velocity.0 * t as f64).clamp(rx, wf - rx);
        let cy = (start.1 + velocity.1 * t as f64).clamp(ry, hf - ry);
        let inside = |x: usize, y: usize| ((x as f64 + 0.5 - cx) / rx).powi(2) + ((y as f64 + 0.5 - cy) / ry).powi(2) <= 1.0;
        let mut pixels = Vec::with_capacity(w * h);
        let mut labels = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let obj = inside(x, y);
                let base = if obj {
                    fg
                } else if (x / stripe + y / stripe) % 2 == 0 {
                    bg_a
                } else {
                    bg_b
                };
                pixels.push(pixel_noise(&mut rng, base));
                labels.push(if obj { spec.category } else { BACKGROUND });
            }
        }
        let truth = LabelMap::new(w, h, labels).expect("sizes match");
        let exact = truth.foreground();
        let mut best = (f64::INFINITY, exact.clone());
        for s in 0..w.max(h) as isize {
            for (dx, dy) in [(s, s / 2), (-s, s / 2), (s, -s / 2), (-s, -s / 2)] {
                let m = shifted(&exact, dx, dy);
                let gap = (mask_iou(&m, &exact).expect("same size") - spec.mask_iou_target).abs();
                if gap < best.0 && m.foreground_count() > 0 {
                    best = (gap, m);
                }
            }
        }

        let other = if spec.label_count > 1 {
            (1.0 - spec.score_confidence) / (spec.label_count - 1) as f32
        } else {
            0.0
        };
        let mut scores = Vec::with_capacity(w * h * spec.label_count);
        for &l in truth.labels() {
            scores.extend((0..spec.label_count).map(|c| if c == l as usize { spec.score_confidence } else { other }));
        }

        out.images.push(RgbImage::new(w, h, pixels).expect("sizes match"));
        out.masks.push(best.1);
        out.scores.push(ScoreMap::new(w, h, spec.label_count, scores).expect("sizes match"));
        out.truth.push(truth);
    }
    out
}

/// `count` scenes with categories cycling through `1..label_count`.
pub fn corrupted_suite(count: usize, label_count: usize, seed: u64) -> Vec<SyntheticShot> {
    (0..count)
        .map(|i| {
            let category = 1 + (i % (label_count - 1)) as u8;
            scene(&SceneSpec::new(category, label_count, seed.wrapping_add(i as u64 * 7919)))
        })
        .collect()
}

/// Training and held-out data for the predict/infer/update loop.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub label_count: usize,
    pub shots: Vec<TrainingShot>,
    pub held_out: Vec<SyntheticShot>,
}

/// Videos alternate between the object categories; each has `shots`
/// shots of `frames` 32x24 frames. Held-out scenes use fresh seeds.
pub fn training_set(videos: usize, shots: usize, frames: usize, categories: usize, seed: u64) -> TrainingSet {
    let label_count = categories + 1;
    let spec = |category: u8, seed: u64| SceneSpec { width: 32, height: 24, frames, ..SceneSpec::new(category, label_count, seed) };
    let mut out = Vec::new();
    for v in 0..videos {
        let category = 1 + (v % categories) as u8;
        for s in 0..shots {
            let shot = scene(&spec(category, seed.wrapping_add((v * 100 + s) as u64)));
            out.push(TrainingShot { video: v, images: shot.images, masks: shot.masks, weak_labels: vec![category] });
        }
    }
    let held_out = (0..2 * categories)
        .map(|i| {
            let category = 1 + (i % categories) as u8;
            scene(&spec(category, seed.wrapping_add(1_000_000 + i as u64)))
        })
        .collect();
    TrainingSet { label_count, shots: out, held_out }
}

/// Writes `videos` one-shot videos as PPM/PGM/MSF1 files plus a manifest
/// at `dir/manifest.json`. Returns the manifest path.
pub fn write_dataset(dir: &Path, videos: usize, frames: usize, categories: usize, seed: u64) -> Result<PathBuf> {
    let label_count = categories + 1;
    let names: Vec<String> = (1..=categories).map(|c| format!("class{c}")).collect();
    let mut entries = Vec::new();
    for v in 0..videos {
        let category = 1 + (v % categories) as u8;
        let spec = SceneSpec { frames, ..SceneSpec::new(category, label_count, seed.wrapping_add(v as u64 * 31)) };
        let shot = scene(&spec);
        let video_id = format!("video{v:02}");
        let mut frames_out = Vec::new();
        for t in 0..frames {
            let rel = PathBuf::from(&video_id).join("shot0");
            let stem = format!("{t:04}");
            let image_path = rel.join(format!("{stem}.ppm"));
            let motion_mask_path = rel.join(format!("{stem}.mask.pgm"));
            let score_map_path = rel.join(format!("{stem}.msf"));
            let truth_path = rel.join(format!("{stem}.gt.pgm"));
            io::write_image(&shot.images[t], dir.join(&image_path))?;
            io::write_mask(&shot.masks[t], dir.join(&motion_mask_path))?;
            io::write_scores(&shot.scores[t], dir.join(&score_map_path))?;
            io::write_labels(&shot.truth[t], dir.join(&truth_path))?;
            frames_out.push(FrameEntry {
                image_path,
                motion_mask_path,
                score_map_path: Some(score_map_path),
                ground_truth_label_path: Some(truth_path),
                ground_truth_box: largest_component_box(&shot.truth[t]),
            });
        }
        entries.push(VideoEntry {
            video_id,
            weak_labels: vec![names[category as usize - 1].clone()],
            shots: vec![ShotEntry { shot_id: "shot0".into(), frames: frames_out, kept_range: None, sampled_frames: None }],
        });
    }
    let manifest = DatasetManifest { categories: names, videos: entries, base_dir: dir.to_path_buf() };
    let path = dir.join("manifest.json");
    io::write_manifest(&manifest, &path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic() {
        let a = scene(&SceneSpec::new(1, 2, 5));
        let b = scene(&SceneSpec::new(1, 2, 5));
        assert_eq!(a.images, b.images);
        assert_eq!(a.masks, b.masks);
    }

    #[test]
    fn masks_near_target_overlap() {
        for shot in corrupted_suite(6, 3, 11) {
            for (m, t) in shot.masks.iter().zip(&shot.truth) {
                let iou = mask_iou(m, &t.foreground()).unwrap();
                assert!((iou - 0.5).abs() < 0.12, "iou {iou}");
            }
        }
    }

    #[test]
    fn scores_agree_with_truth() {
        let shot = scene(&SceneSpec::new(2, 3, 1));
        for (s, t) in shot.scores.iter().zip(&shot.truth) {
            assert_eq!(&crate::model::argmax_labels(s), t);
            crate::model::validate_score_map(s).unwrap();
        }
    }
}
