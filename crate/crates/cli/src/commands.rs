use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use motionseg::coloc::{colocalize_shot, BoundingBox};
use motionseg::eval::{corloc, ClassScore, ConfusionAccumulator, EvalReport};
use motionseg::inference::{self, infer_labels, BatchFrame};
use motionseg::io::{self, DatasetManifest};
use motionseg::model::{LabelMap, RgbImage, BACKGROUND};
use motionseg::pipeline::{prune_manifest, sample_manifest, select_finetune_shots};
use motionseg::predictor::{shot_overlap, train_loop, EpochLog, TrainingShot};
use motionseg::synth;
use serde::Serialize;
use walkdir::WalkDir;

use crate::config::{ColocArgs, InferenceArgs, PruneArgs, TrainArgs};
use crate::data::{self, ShotRef};
use crate::error::{CliError, CliResult, Context};

fn read_manifest(path: &Path) -> CliResult<DatasetManifest> {
    io::read_manifest(path).context(|| format!("manifest {}", path.display()))
}

fn label_count(m: &DatasetManifest) -> usize {
    m.categories.len() + 1
}

pub fn prune(manifest: &Path, args: &PruneArgs, out: &Path) -> CliResult<()> {
    let m = read_manifest(manifest)?;
    let mut fractions: Vec<Vec<Vec<f64>>> = m.videos.iter().map(|v| vec![Vec::new(); v.shots.len()]).collect();
    for shot in data::shots(&m) {
        fractions[shot.video_index][shot.shot_index] = shot
            .shot
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                io::read_mask(m.resolve(&f.motion_mask_path))
                    .map(|mask| mask.foreground_fraction())
                    .context(|| shot.describe_frame(i))
            })
            .collect::<CliResult<_>>()?;
    }
    let (pruned, decisions) = prune_manifest(&m, &fractions, &args.params())?;
    io::write_manifest(&pruned, out.join("manifest.json"))?;
    data::write_json(&out.join("prune_report.json"), &decisions)
}

pub fn sample(manifest: &Path, samples: usize, out: &Path) -> CliResult<()> {
    let m = read_manifest(manifest)?;
    let sampled = sample_manifest(&m, samples)?;
    io::write_manifest(&sampled, out.join("manifest.json")).map_err(Into::into)
}

fn write_label_maps(out: &Path, shot: &ShotRef, labels: &[LabelMap]) -> CliResult<()> {
    for ((i, entry), x) in shot.frames().into_iter().zip(labels) {
        io::write_labels(x, data::frame_output(out, shot, entry, "pgm")).context(|| shot.describe_frame(i))?;
    }
    Ok(())
}

pub fn infer(manifest: &Path, model: Option<&Path>, args: &InferenceArgs, seed: u64, out: &Path) -> CliResult<()> {
    let m = read_manifest(manifest)?;
    let model = data::load_model(model)?;
    for shot in data::shots(&m) {
        let images = data::load_images(&m, &shot)?;
        let masks = data::load_masks(&m, &shot)?;
        let scores = data::load_scores(&m, &shot, &images, model.as_ref(), label_count(&m))?;
        let weak = m.weak_label_indices(shot.video)?;
        let batch: Vec<BatchFrame> = images
            .iter()
            .zip(&masks)
            .zip(&scores)
            .map(|((image, mask), scores)| BatchFrame { image, mask, scores })
            .collect();
        let labels = infer_labels(&batch, &weak, &args.params(data::shot_seed(seed, &shot))).context(|| shot.describe())?;
        write_label_maps(out, &shot, &labels)?;
    }
    Ok(())
}

pub fn hard_assign(manifest: &Path, out: &Path) -> CliResult<()> {
    let m = read_manifest(manifest)?;
    for shot in data::shots(&m) {
        let masks = data::load_masks(&m, &shot)?;
        let weak = m.weak_label_indices(shot.video)?;
        let refs: Vec<_> = masks.iter().collect();
        let labels = inference::hard_assign(&refs, &weak).context(|| shot.describe())?;
        write_label_maps(out, &shot, &labels)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ShotChoice {
    video_id: String,
    overlaps: Vec<(String, f64)>,
    selected: Option<String>,
}

#[derive(Serialize)]
struct TrainReport {
    epochs: Vec<EpochLog>,
    #[serde(skip_serializing_if = "Option::is_none")]
    finetune: Option<Vec<Option<String>>>,
}

pub fn train_toy(manifest: &Path, train: &TrainArgs, inference: &InferenceArgs, seed: u64, out: &Path) -> CliResult<()> {
    let m = read_manifest(manifest)?;
    let mut shots = Vec::new();
    for shot in data::shots(&m) {
        shots.push(TrainingShot {
            video: shot.video_index,
            images: data::load_images(&m, &shot)?,
            masks: data::load_masks(&m, &shot)?,
            weak_labels: m.weak_label_indices(shot.video)?,
        });
    }
    let outcome = train_loop(&shots, label_count(&m), &inference.params(seed), &train.config(seed))?;
    outcome.model.save(out.join("model.mtm"))?;
    let finetune = outcome.finetune_selection.map(|sel| {
        sel.iter()
            .zip(&m.videos)
            .map(|(s, v)| s.map(|k| v.shots[k].shot_id.clone()))
            .collect()
    });
    data::write_json(&out.join("train_log.json"), &TrainReport { epochs: outcome.log, finetune })
}

pub fn select_finetune(manifest: &Path, model: &Path, threshold: f64, out: &Path) -> CliResult<()> {
    let m = read_manifest(manifest)?;
    let model = data::load_model(Some(model))?.expect("model path given");
    let mut overlaps: Vec<Vec<f64>> = m.videos.iter().map(|v| Vec::with_capacity(v.shots.len())).collect();
    for shot in data::shots(&m) {
        let images = data::load_images(&m, &shot)?;
        let masks = data::load_masks(&m, &shot)?;
        overlaps[shot.video_index].push(shot_overlap(&model, &images, &masks).context(|| shot.describe())?);
    }
    let selection = select_finetune_shots(&overlaps, threshold);
    let mut chosen = m.clone();
    chosen.videos.clear();
    let mut report = Vec::new();
    for ((video, sel), ov) in m.videos.iter().zip(&selection).zip(&overlaps) {
        report.push(ShotChoice {
            video_id: video.video_id.clone(),
            overlaps: video.shots.iter().map(|s| s.shot_id.clone()).zip(ov.iter().copied()).collect(),
            selected: sel.map(|k| video.shots[k].shot_id.clone()),
        });
        if let Some(k) = sel {
            let mut v = video.clone();
            v.shots = vec![video.shots[*k].clone()];
            chosen.videos.push(v);
        }
    }
    data::write_json(&out.join("finetune_selection.json"), &report)?;
    io::write_manifest(&chosen, out.join("manifest.json")).map_err(Into::into)
}

pub fn coloc(manifest: &Path, model: Option<&Path>, args: &ColocArgs, seed: u64, out: &Path) -> CliResult<()> {
    let m = read_manifest(manifest)?;
    let model = data::load_model(model)?;
    let mut rows: Vec<(String, Option<BoundingBox>)> = Vec::new();
    for shot in data::shots(&m) {
        let weak = m.weak_label_indices(shot.video)?;
        let [category] = weak[..] else {
            return Err(motionseg::Error::MultiLabelVideo(weak.len())).context(|| shot.describe());
        };
        let images = data::load_images(&m, &shot)?;
        let scores = data::load_scores(&m, &shot, &images, model.as_ref(), label_count(&m))?;
        let boxes = colocalize_shot(&images, &scores, category, &args.params(data::shot_seed(seed, &shot)))
            .context(|| shot.describe())?;
        for ((_, entry), b) in shot.frames().into_iter().zip(boxes) {
            rows.push((data::normalize(&m.resolve(&entry.image_path)).display().to_string(), b));
        }
    }
    let path = out.join("boxes.csv");
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::new("Csv", e.to_string());
    writer.write_record(["frame_path", "x_min", "y_min", "x_max", "y_max"]).map_err(csv_err)?;
    for (frame, b) in rows {
        let coords = match b {
            Some(b) => [b.x_min, b.y_min, b.x_max, b.y_max].map(|v| v.to_string()),
            None => Default::default(),
        };
        writer
            .write_record(std::iter::once(frame).chain(coords))
            .map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::new("Csv", e.to_string()))?;
    io::write_bytes(&path, &bytes).map_err(Into::into)
}

pub struct IouInputs<'a> {
    pub pred: &'a Path,
    pub truth: Option<&'a Path>,
    pub manifest: Option<&'a Path>,
    pub label_count: Option<usize>,
    pub ignore: Option<u8>,
    pub objects_only: bool,
}

/// `(prediction, ground truth, description)` triples to score.
fn iou_pairs(inputs: &IouInputs, m: Option<&DatasetManifest>) -> CliResult<Vec<(PathBuf, PathBuf, String)>> {
    if let Some(truth) = inputs.truth {
        let mut pairs = Vec::new();
        for entry in WalkDir::new(inputs.pred).sort_by_file_name() {
            let entry = entry.map_err(|e| CliError::new("Io", e.to_string()))?;
            let p = entry.path();
            if !entry.file_type().is_file() || p.extension().is_none_or(|e| e != "pgm") {
                continue;
            }
            let rel = p.strip_prefix(inputs.pred).expect("walk stays below root").to_path_buf();
            pairs.push((p.to_path_buf(), truth.join(&rel), rel.display().to_string()));
        }
        return Ok(pairs);
    }
    let m = m.ok_or_else(|| CliError::usage("eval-iou needs --truth or --manifest"))?;
    let mut pairs = Vec::new();
    for shot in data::shots(m) {
        for (i, entry) in shot.frames() {
            if let Some(gt) = &entry.ground_truth_label_path {
                pairs.push((data::frame_output(inputs.pred, &shot, entry, "pgm"), m.resolve(gt), shot.describe_frame(i)));
            }
        }
    }
    Ok(pairs)
}

pub fn eval_iou(inputs: &IouInputs, out: &Path) -> CliResult<()> {
    let m = inputs.manifest.map(read_manifest).transpose()?;
    let names: Vec<String> = match (&m, inputs.label_count) {
        (Some(m), _) => m.label_set()?.names().to_vec(),
        (None, Some(n)) if n > 0 => (0..n).map(|l| if l == 0 { "background".into() } else { format!("class{l}") }).collect(),
        _ => return Err(CliError::usage("eval-iou needs --manifest or a positive --label-count")),
    };
    let count = names.len();
    let pairs = iou_pairs(inputs, m.as_ref())?;
    if pairs.is_empty() {
        return Err(CliError::new("EmptyList", "no label maps to evaluate"));
    }
    let mut acc = ConfusionAccumulator::new(count);
    for (pred, truth, what) in &pairs {
        let p = io::read_labels(pred, count, None).context(|| what.clone())?;
        let t = io::read_labels(truth, count, inputs.ignore).context(|| what.clone())?;
        acc.accumulate(&p, &t, inputs.ignore).context(|| what.clone())?;
    }
    let first = usize::from(inputs.objects_only);
    let classes: Vec<usize> = (first..count).collect();
    let report = EvalReport {
        metric: "iou".into(),
        per_class: classes
            .iter()
            .map(|&c| ClassScore { label: c as u8, name: names[c].clone(), value: acc.class_iou(c) })
            .collect(),
        mean: acc.mean_iou(&classes).ok(),
        frames: pairs.len(),
    };
    data::write_json(&out.join("eval_iou.json"), &report)
}

fn parse_box(record: &csv::StringRecord) -> Result<Option<BoundingBox>, String> {
    if record.len() != 5 {
        return Err(format!("expected 5 fields, found {}", record.len()));
    }
    let coords: Vec<&str> = record.iter().skip(1).collect();
    if coords.iter().all(|c| c.is_empty()) {
        return Ok(None);
    }
    let v = coords
        .iter()
        .map(|c| c.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    BoundingBox::new(v[0], v[1], v[2], v[3]).map(Some).map_err(|e| e.to_string())
}

fn read_boxes(path: &Path) -> CliResult<HashMap<PathBuf, Option<BoundingBox>>> {
    let describe = || path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| CliError::new("Io", e.to_string())).context(describe)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let mut out = HashMap::new();
    for (row, record) in reader.records().enumerate() {
        let at = || format!("{} row {}", path.display(), row + 2);
        let record = record.map_err(|e| CliError::new("Csv", e.to_string())).context(at)?;
        let b = parse_box(&record).map_err(|msg| CliError::new("SchemaError", msg)).context(at)?;
        out.insert(data::normalize(Path::new(&record[0])), b);
    }
    Ok(out)
}

pub fn eval_corloc(manifest: &Path, boxes: &Path, out: &Path) -> CliResult<()> {
    let m = read_manifest(manifest)?;
    let predicted = read_boxes(boxes)?;
    let names = m.label_set()?;
    let mut by_class: BTreeMap<u8, Vec<(Option<BoundingBox>, BoundingBox)>> = BTreeMap::new();
    for shot in data::shots(&m) {
        let weak = m.weak_label_indices(shot.video)?;
        for (_, entry) in shot.frames() {
            let Some(truth) = entry.ground_truth_box else { continue };
            let key = data::normalize(&m.resolve(&entry.image_path));
            let pred = predicted.get(&key).copied().flatten();
            for &l in &weak {
                by_class.entry(l).or_default().push((pred, truth));
            }
        }
    }
    if by_class.is_empty() {
        return Err(CliError::new("EmptyList", "no frames with ground truth boxes"));
    }
    let mut per_class = Vec::new();
    for (&l, pairs) in &by_class {
        per_class.push(ClassScore {
            label: l,
            name: names.name(l).unwrap_or_default().to_string(),
            value: Some(corloc(pairs)?),
        });
    }
    let mean = per_class.iter().filter_map(|c| c.value).sum::<f64>() / per_class.len() as f64;
    let report = EvalReport {
        metric: "corloc".into(),
        frames: by_class.values().map(Vec::len).sum(),
        per_class,
        mean: Some(mean),
    };
    data::write_json(&out.join("eval_corloc.json"), &report)
}

/// Distinct colors for label values (background stays uncolored).
fn palette(label: u8) -> [f64; 3] {
    let mut c = [0u8; 3];
    let mut v = label;
    for shift in (0..8).rev() {
        for (ch, slot) in c.iter_mut().enumerate() {
            *slot |= ((v >> ch) & 1) << shift;
        }
        v >>= 3;
    }
    c.map(|x| f64::from(x) / 255.0)
}

pub fn overlay(manifest: &Path, labels: &Path, opacity: f64, out: &Path) -> CliResult<()> {
    if !(0.0..=1.0).contains(&opacity) {
        return Err(CliError::usage("--opacity must lie in [0, 1]"));
    }
    let m = read_manifest(manifest)?;
    let count = label_count(&m);
    for shot in data::shots(&m) {
        let images = data::load_images(&m, &shot)?;
        for ((i, entry), img) in shot.frames().into_iter().zip(&images) {
            let x = io::read_labels(data::frame_output(labels, &shot, entry, "pgm"), count, None)
                .context(|| shot.describe_frame(i))?;
            if x.width() != img.width() || x.height() != img.height() {
                return Err(CliError::new("DimensionMismatch", "label map and frame differ in size"))
                    .context(|| shot.describe_frame(i));
            }
            let pixels = img
                .pixels()
                .iter()
                .zip(x.labels())
                .map(|(z, &l)| {
                    if l == BACKGROUND {
                        *z
                    } else {
                        let c = palette(l);
                        [0, 1, 2].map(|k| (1.0 - opacity) * z[k] + opacity * c[k])
                    }
                })
                .collect();
            let blended = RgbImage::new(img.width(), img.height(), pixels)?;
            io::write_image(&blended, data::frame_output(out, &shot, entry, "ppm")).context(|| shot.describe_frame(i))?;
        }
    }
    Ok(())
}

pub fn synth(videos: usize, frames: usize, categories: usize, seed: u64, out: &Path) -> CliResult<()> {
    if !(1..synth::CATEGORY_COLORS.len()).contains(&categories) {
        return Err(CliError::usage(format!("--categories must be between 1 and {}", synth::CATEGORY_COLORS.len() - 1)));
    }
    if videos == 0 || frames == 0 {
        return Err(CliError::usage("--videos and --frames must be positive"));
    }
    synth::write_dataset(out, videos, frames, categories, seed)?;
    Ok(())
}
