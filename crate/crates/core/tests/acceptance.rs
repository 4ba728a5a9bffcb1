//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use motionseg::coloc::{coloc_segment, BoundingBox, SuperpixelMap};
use motionseg::energy::{build_energy, BoundaryBand, PairwiseParams};
use motionseg::eval::{box_iou, corloc, ConfusionAccumulator};
use motionseg::gmm::{fit_gmm, fit_gmm_traced, FgBgGmm, WeightedPixelSample};
use motionseg::inference::{hard_assign, infer_labels, BatchFrame, InferenceParams};
use motionseg::io::{self, DatasetManifest, FrameEntry, FrameRange, ShotEntry, VideoEntry};
use motionseg::loss::{class_weights, softmax, weighted_nll};
use motionseg::maxflow::{min_cut, FlowNetwork};
use motionseg::model::{argmax_labels, LabelMap, MotionMask, RgbImage, ScoreMap};
use motionseg::pipeline::{prune_shot, sample_frames, select_finetune_shots, PruneOutcome, PruneParams, RejectReason, ShotStats};
use motionseg::predictor::{train_loop, ToyModel, ToyTrainConfig};
use motionseg::synth::{self, SyntheticShot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg.into()) }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    check(took < limit, format!("took {took:.2?}, limit {limit:?}"))
}

fn exact_binary() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let (w, h) = (rng.random_range(1..=4), rng.random_range(1..=3));
        let object = rng.random_range(1..=5u8);
        let g = common::random_grid(&mut rng, w, h, &[0, object]);
        let x = g.minimize_binary().map_err(|e| e.to_string())?;
        let slots = g.to_slots(&x).map_err(|e| e.to_string())?;
        let gap = common::energy(&g, &slots) - common::brute_force_min(&g);
        worst = worst.max(gap.abs());
        check(gap.abs() <= 1e-9, format!("instance {k}: gap {gap:e}"))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("200 instances, max |gap| {worst:.1e}, {:.2?}", start.elapsed()))
}

fn expansion_quality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut optimal = 0;
    let mut worst_ratio: f64 = 1.0;
    for k in 0..100 {
        let g = common::random_grid(&mut rng, 3, 3, &[0, 1, 2]);
        let (x, trace) = g.minimize_expansion_traced(&g.unary_argmin(), 10).map_err(|e| e.to_string())?;
        for pair in trace.windows(2) {
            check(pair[1] <= pair[0], format!("instance {k}: energy rose {} -> {}", pair[0], pair[1]))?;
        }
        let e = common::energy(&g, &g.to_slots(&x).map_err(|e| e.to_string())?);
        let best = common::brute_force_min(&g);
        check(e <= 2.0 * best + 1e-9, format!("instance {k}: {e} > 2 x {best}"))?;
        if (e - best).abs() <= 1e-9 {
            optimal += 1;
        }
        if best > 0.0 {
            worst_ratio = worst_ratio.max(e / best);
        }
    }
    check(optimal >= 90, format!("optimal on {optimal}/100"))?;
    within(start, Duration::from_secs(30))?;
    Ok(format!("optimal on {optimal}/100, worst ratio {worst_ratio:.4}, {:.2?}", start.elapsed()))
}

fn maxflow_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..500 {
        let n = rng.random_range(1..=12);
        let mut net = FlowNetwork::new(n);
        for i in 0..n {
            let src = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..10.0) };
            let sink = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..10.0) };
            net.add_terminal(i, src, sink);
        }
        let edges = rng.random_range(0..=2 * n);
        for _ in 0..edges {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                net.add_edge(a, b, rng.random_range(0.0..8.0), if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..8.0) });
            }
        }
        let cut = min_cut(&net);
        let best = common::brute_force_cut(&net);
        check((cut.flow_value - best).abs() <= 1e-9, format!("graph {k}: flow {} vs {best}", cut.flow_value))?;
        let cap = net.cut_capacity(&cut.sides);
        check((cap - best).abs() <= 1e-9, format!("graph {k}: cut {cap} vs {best}"))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("500 graphs, {:.2?}", start.elapsed()))
}

fn em_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut iterations = 0;
    for k in 0..50 {
        let clusters = rng.random_range(1..=4);
        let centers: Vec<[f64; 3]> = (0..clusters).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let count = rng.random_range(20..300);
        let samples: Vec<WeightedPixelSample> = (0..count)
            .map(|_| {
                let c = centers[rng.random_range(0..clusters)];
                let color = c.map(|v| (v + rng.random_range(-0.08..0.08f64)).clamp(0.0, 1.0));
                WeightedPixelSample::new(color, rng.random_range(0.1..2.0))
            })
            .collect();
        let fit = fit_gmm_traced(&samples, 5, k).map_err(|e| e.to_string())?;
        for (t, pair) in fit.nll_history.windows(2).enumerate() {
            check(pair[1] <= pair[0] + 1e-9, format!("set {k}, iteration {t}: {} -> {}", pair[0], pair[1]))?;
        }
        // the recorded value is the weighted mean NLL of the returned model
        let total: f64 = samples.iter().map(|s| s.weight).sum();
        let direct: f64 = samples.iter().map(|s| s.weight * fit.gmm.nll(&s.color)).sum::<f64>() / total;
        let last = *fit.nll_history.last().unwrap();
        check((direct - last).abs() <= 1e-9 * direct.abs().max(1.0), format!("set {k}: history {last} vs direct {direct}"))?;
        iterations += fit.nll_history.len() - 1;
    }
    Ok(format!("50 sets, {iterations} EM iterations checked"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let channels = rng.random_range(2..=5);
        let pixels = rng.random_range(1..=6);
        let logits: Vec<f64> = (0..pixels * channels).map(|_| rng.random_range(-3.0..3.0)).collect();
        let labels: Vec<u8> = (0..pixels).map(|_| rng.random_range(0..channels as u8)).collect();
        let counts: BTreeMap<u8, u64> = (1..channels as u8).map(|l| (l, rng.random_range(1..100))).collect();
        let weights = class_weights(&counts).map_err(|e| e.to_string())?;
        let probs: Vec<f64> = logits.chunks(channels).flat_map(softmax).collect();
        let analytic = weighted_nll(&probs, channels, &labels, &weights).map_err(|e| e.to_string())?.gradient;
        let numeric = common::numeric_gradient(&logits, channels, &labels, &weights, 1e-5);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            check(rel <= 1e-5, format!("instance {k}, entry {i}: analytic {a} vs numeric {n}"))?;
        }
    }
    Ok(format!("100 instances, worst relative error {worst:.1e}"))
}

fn mean_iou(predicted: &[LabelMap], truth: &[LabelMap], classes: &[usize]) -> f64 {
    let mut acc = ConfusionAccumulator::new(classes.len());
    for (p, t) in predicted.iter().zip(truth) {
        acc.accumulate(p, t, None).unwrap();
    }
    acc.mean_iou(classes).unwrap()
}

fn category(shot: &SyntheticShot) -> u8 {
    shot.truth[0].labels().iter().copied().max().unwrap()
}

fn infer_shot(shot: &SyntheticShot, params: &InferenceParams) -> motionseg::Result<Vec<LabelMap>> {
    let batch: Vec<BatchFrame> = shot
        .images
        .iter()
        .zip(&shot.masks)
        .zip(&shot.scores)
        .map(|((image, mask), scores)| BatchFrame { image, mask, scores })
        .collect();
    infer_labels(&batch, &[category(shot)], params)
}

/// Mean over scenes of the scene's mean IoU (background and its object).
fn suite_iou(suite: &[SyntheticShot], label: impl Fn(&SyntheticShot) -> Vec<LabelMap>) -> f64 {
    let total: f64 = suite
        .iter()
        .map(|s| mean_iou(&label(s), &s.truth, &[0, category(s) as usize]))
        .sum();
    total / suite.len() as f64
}

fn soft_vs_hard(suite: &[SyntheticShot]) -> Outcome {
    let start = Instant::now();
    let soft = suite_iou(suite, |s| infer_shot(s, &InferenceParams::training(6)).unwrap());
    let hard = suite_iou(suite, |s| {
        let masks: Vec<&MotionMask> = s.masks.iter().collect();
        hard_assign(&masks, &[category(s)]).unwrap()
    });
    let gain = 100.0 * (soft - hard);
    check(gain >= 5.0, format!("soft {:.1} vs hard {:.1}", 100.0 * soft, 100.0 * hard))?;
    within(start, Duration::from_secs(120))?;
    Ok(format!(
        "{} scenes: soft {:.1} vs hard {:.1} mean IoU (+{gain:.1}), {:.2?}",
        suite.len(),
        100.0 * soft,
        100.0 * hard,
        start.elapsed()
    ))
}

fn iteration_stability(suite: &[SyntheticShot]) -> Outcome {
    let scores: Vec<f64> = (1..=5)
        .map(|it| {
            let p = InferenceParams { iterations: it, ..InferenceParams::training(7) };
            100.0 * suite_iou(suite, |s| infer_shot(s, &p).unwrap())
        })
        .collect();
    let spread = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) - scores.iter().copied().fold(f64::INFINITY, f64::min);
    let listed = scores.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>().join("/");
    check(spread < 3.0, format!("IoU {listed}, spread {spread:.2}"))?;
    Ok(format!("IoU for 1-5 iterations {listed}, spread {spread:.2}"))
}

fn held_out_iou(model: &ToyModel, held_out: &[SyntheticShot], label_count: usize) -> f64 {
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for shot in held_out {
        for (img, t) in shot.images.iter().zip(&shot.truth) {
            predicted.push(argmax_labels(&model.predict(img)));
            truth.push(t.clone());
        }
    }
    let classes: Vec<usize> = (0..label_count).collect();
    mean_iou(&predicted, &truth, &classes)
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    // background plus one object class, 10-frame shots, default momentum
    // and weight decay; the rate is raised for the zero-initialized model
    let data = synth::training_set(8, 1, 10, 1, 8);
    let cfg = ToyTrainConfig { seed: 8, learning_rate: 0.05, ..ToyTrainConfig::default() };
    let outcome = train_loop(&data.shots, data.label_count, &InferenceParams::training(8), &cfg).map_err(|e| e.to_string())?;
    let before = 100.0 * held_out_iou(&ToyModel::zeros(data.label_count), &data.held_out, data.label_count);
    let after = 100.0 * held_out_iou(&outcome.model, &data.held_out, data.label_count);
    check(after > before, format!("held-out IoU {before:.2} -> {after:.2}"))?;
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "held-out mean IoU {before:.1} -> {after:.1} after {} epochs at rate {}, {:.2?}",
        cfg.epochs,
        cfg.learning_rate,
        start.elapsed()
    ))
}

fn oracle_prune(fractions: &[f64], p: &PruneParams) -> PruneOutcome {
    if fractions.len() < p.min_frames {
        return PruneOutcome::Rejected { reason: RejectReason::TooFewFrames };
    }
    match common::longest_valid_window(fractions, p.min_fg_frac, p.max_fg_frac) {
        None => PruneOutcome::Rejected { reason: RejectReason::NoValidRun },
        Some((s, e)) if e - s < p.min_run => PruneOutcome::Rejected { reason: RejectReason::RunTooShort },
        Some((start, end)) => PruneOutcome::Kept { range: FrameRange { start, end } },
    }
}

fn oracle_select(overlaps: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    overlaps
        .iter()
        .map(|v| {
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let first = v.iter().position(|&o| o == max)?;
            (max >= threshold).then_some(first)
        })
        .collect()
}

fn pipeline_rules() -> Outcome {
    // 40x25 masks: 24, 25, 500 and 510 foreground pixels give exactly
    // 2.4%, 2.5%, 50% and 51%
    let mask = |count: usize| MotionMask::from_fn(40, 25, |x, y| y * 40 + x < count);
    let shot = |counts: &[usize]| ShotStats::from_masks("s", &counts.iter().map(|&c| mask(c)).collect::<Vec<_>>());
    let p = PruneParams::default();
    let fixtures: Vec<(&str, Vec<usize>)> = vec![
        ("19 valid frames", vec![100; 19]),
        ("20 valid frames", vec![100; 20]),
        ("20 frames at 2.5%", vec![25; 20]),
        ("20 frames at 50%", vec![500; 20]),
        ("one frame at 2.4%", [vec![100; 10], vec![24], vec![100; 10]].concat()),
        ("one frame at 51%", [vec![100; 10], vec![510], vec![100; 10]].concat()),
        ("run of 20 after 2.4%", [vec![24], vec![300; 20]].concat()),
        ("run of 20 before 51%", [vec![25; 20], vec![510; 5]].concat()),
        ("tied runs", [vec![100; 20], vec![510], vec![100; 20]].concat()),
        ("later run longer", [vec![100; 20], vec![0], vec![100; 21]].concat()),
        ("nothing valid", vec![0; 30]),
        ("19-frame run in 40", [vec![100; 19], vec![24], vec![100; 19], vec![510]].concat()),
    ];
    let mut cases = 0;
    for (name, counts) in &fixtures {
        let stats = shot(counts);
        let got = prune_shot(&stats, &p);
        let want = oracle_prune(&stats.fg_fractions, &p);
        check(got == want, format!("{name}: {got:?} vs oracle {want:?}"))?;
        cases += 1;
    }
    check(
        shot(&[24; 20]).fg_fractions[0] < p.min_fg_frac && shot(&[510; 20]).fg_fractions[0] > p.max_fg_frac,
        "fraction fixtures do not straddle the thresholds",
    )?;
    for len in 10..=60 {
        let got = sample_frames(len, 10).map_err(|e| e.to_string())?;
        let want: Vec<usize> = (0..10).map(|k| ((k as f64 + 0.5) * len as f64 / 10.0).floor() as usize).collect();
        check(got == want, format!("sampling {len}: {got:?} vs {want:?}"))?;
        cases += 1;
    }
    let overlaps = vec![
        vec![0.2],
        vec![0.19999999],
        vec![0.1, 0.2, 0.2],
        vec![0.5, 0.7, 0.7, 0.1],
        vec![],
        vec![0.0, 0.0],
        vec![0.2000001, 0.2],
    ];
    let got = select_finetune_shots(&overlaps, 0.2);
    let want = oracle_select(&overlaps, 0.2);
    check(got == want, format!("selection {got:?} vs {want:?}"))?;
    check(got[0] == Some(0) && got[1].is_none(), "0.2 threshold must be inclusive")?;
    cases += overlaps.len();
    Ok(format!("{cases} fixtures match the rule oracles"))
}

fn random_gmms(rng: &mut ChaCha8Rng) -> FgBgGmm {
    let mut fit = |center: [f64; 3]| {
        let samples: Vec<WeightedPixelSample> = (0..40)
            .map(|_| WeightedPixelSample::new(center.map(|v: f64| (v + rng.random_range(-0.2..0.2f64)).clamp(0.0, 1.0)), 1.0))
            .collect();
        let seed = rng.random();
        fit_gmm(&samples, 2, seed).unwrap()
    };
    FgBgGmm { foreground: fit([0.8, 0.3, 0.2]), background: fit([0.2, 0.4, 0.7]) }
}

fn metrics() -> Outcome {
    let a = BoundingBox { x_min: 0, y_min: 0, x_max: 9, y_max: 9 };
    let b = BoundingBox { x_min: 5, y_min: 0, x_max: 14, y_max: 9 };
    check((box_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12, "1/3 overlap")?;
    check(box_iou(&a, &a) == 1.0, "identity")?;
    let half = BoundingBox { x_min: 0, y_min: 0, x_max: 19, y_max: 9 };
    check(box_iou(&a, &half) == 0.5, "exact half")?;
    let c = corloc(&[(Some(a), half), (Some(a), a), (None, a), (Some(b), a)]).map_err(|e| e.to_string())?;
    check(c == 25.0, format!("corloc {c}, expected 25"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let params = PairwiseParams::default();
    for k in 0..100 {
        let (w, h) = (rng.random_range(1..=4), rng.random_range(1..=3));
        let img = RgbImage::new(w, h, (0..w * h).map(|_| [rng.random(), rng.random(), rng.random()]).collect()).unwrap();
        let gmms = random_gmms(&mut rng);
        let sp = SuperpixelMap::from_ids(&img, (0..w * h).collect()).map_err(|e| e.to_string())?;
        let by_superpixel = coloc_segment(&img, &sp, &gmms, &params).map_err(|e| e.to_string())?;
        let model = build_energy(&img, &gmms, &ScoreMap::uniform(w, h, 2), &[0, 1], 0.0, &params, &BoundaryBand::empty(w, h))
            .map_err(|e| e.to_string())?;
        let by_pixel = motionseg::energy::minimize_binary(&model).map_err(|e| e.to_string())?;
        let e_sp = model.graph().energy(by_superpixel.labels()).map_err(|e| e.to_string())?;
        let e_px = model.graph().energy(by_pixel.labels()).map_err(|e| e.to_string())?;
        check((e_sp - e_px).abs() <= 1e-9, format!("instance {k}: superpixel energy {e_sp} vs pixel {e_px}"))?;
        check(by_superpixel == by_pixel, format!("instance {k}: labelings differ"))?;
    }
    Ok("analytic box cases, strict CorLoc, 100 singleton-superpixel cuts match".into())
}

fn random_manifest(rng: &mut ChaCha8Rng) -> DatasetManifest {
    let categories: Vec<String> = (0..rng.random_range(1..4)).map(|c| format!("cat{c}")).collect();
    let videos = (0..rng.random_range(0..3))
        .map(|v| VideoEntry {
            video_id: format!("v{v}"),
            weak_labels: vec![categories[rng.random_range(0..categories.len())].clone()],
            shots: (0..rng.random_range(1..3))
                .map(|s| {
                    let n = rng.random_range(1..6);
                    ShotEntry {
                        shot_id: format!("s{s}"),
                        frames: (0..n)
                            .map(|f| FrameEntry {
                                image_path: PathBuf::from(format!("v{v}/s{s}/{f}.ppm")),
                                motion_mask_path: PathBuf::from(format!("v{v}/s{s}/{f}.pgm")),
                                score_map_path: rng.random_bool(0.5).then(|| PathBuf::from(format!("v{v}/s{s}/{f}.msf"))),
                                ground_truth_label_path: None,
                                ground_truth_box: rng.random_bool(0.5).then(|| BoundingBox {
                                    x_min: 1,
                                    y_min: 2,
                                    x_max: 3 + f,
                                    y_max: 4,
                                }),
                            })
                            .collect(),
                        kept_range: rng.random_bool(0.5).then_some(FrameRange { start: 0, end: n }),
                        sampled_frames: None,
                    }
                })
                .collect(),
        })
        .collect();
    DatasetManifest { categories, videos, base_dir: PathBuf::from("/data") }
}

fn determinism_and_formats(suite: &[SyntheticShot]) -> Outcome {
    let params = InferenceParams::training(11);
    let encode = |maps: &[LabelMap]| maps.iter().flat_map(io::encode_labels).collect::<Vec<u8>>();
    for shot in suite.iter().take(4) {
        let a = encode(&infer_shot(shot, &params).map_err(|e| e.to_string())?);
        let b = encode(&infer_shot(shot, &params).map_err(|e| e.to_string())?);
        check(a == b, "repeat runs differ")?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = encode(&pool.install(|| infer_shot(shot, &params)).map_err(|e| e.to_string())?);
        check(a == c, "single-thread run differs")?;
    }
    let data = synth::training_set(2, 1, 4, 1, 12);
    let cfg = ToyTrainConfig { epochs: 2, ..ToyTrainConfig::default() };
    let m1 = train_loop(&data.shots, data.label_count, &InferenceParams::training(12), &cfg).map_err(|e| e.to_string())?;
    let m2 = train_loop(&data.shots, data.label_count, &InferenceParams::training(12), &cfg).map_err(|e| e.to_string())?;
    check(m1.model.to_bytes() == m2.model.to_bytes(), "training is not reproducible")?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut payloads = 0;
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
        let n = w * h;
        let img = RgbImage::new(w, h, (0..n).map(|_| [0; 3].map(|_: u8| f64::from(rng.random::<u8>()) / 255.0)).collect()).unwrap();
        check(io::decode_ppm(&io::encode_ppm(&img)).map_err(|e| e.to_string())? == img, "PPM round trip")?;
        let mask = MotionMask::new(w, h, (0..n).map(|_| rng.random_range(0..2)).collect()).unwrap();
        check(io::decode_mask(&io::encode_mask(&mask)).map_err(|e| e.to_string())? == mask, "mask round trip")?;
        let labels = LabelMap::new(w, h, (0..n).map(|_| rng.random_range(0..7)).collect()).unwrap();
        check(io::decode_labels(&io::encode_labels(&labels), 7, None).map_err(|e| e.to_string())? == labels, "label round trip")?;
        let c = rng.random_range(1..6);
        let raw: Vec<f32> = (0..n * c).map(|_| rng.random()).collect();
        let scores = ScoreMap::new(w, h, c, raw).unwrap();
        let back = io::decode_scores(&io::encode_scores(&scores)).map_err(|e| e.to_string())?;
        check(back.values().iter().zip(scores.values()).all(|(a, b)| a.to_bits() == b.to_bits()), "score round trip")?;
        let model = ToyModel::from_weights((0..c).map(|_| [0.0; 10].map(|_: f64| f64::from(rng.random_range(-5.0f32..5.0)))).collect())
            .unwrap();
        check(ToyModel::from_bytes(&model.to_bytes()).map_err(|e| e.to_string())? == model, "checkpoint round trip")?;
        let manifest = random_manifest(&mut rng);
        let parsed = DatasetManifest::from_json(&manifest.to_json(), "/data").map_err(|e| e.to_string())?;
        check(parsed == manifest, "manifest round trip")?;
        payloads += 6;
    }
    Ok(format!("repeat, single-thread and training runs byte-identical; {payloads} payloads round-trip"))
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let suite = synth::corrupted_suite(20, 3, 6);
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 exact binary cut vs enumeration", Box::new(exact_binary)),
        ("2 alpha expansion quality", Box::new(expansion_quality)),
        ("3 max-flow vs brute-force cut", Box::new(maxflow_oracle)),
        ("4 EM monotonicity", Box::new(em_monotone)),
        ("5 gradient vs finite differences", Box::new(gradient_check)),
        ("6 soft beats hard assignment", Box::new(|| soft_vs_hard(&suite))),
        ("7 iteration insensitivity", Box::new(|| iteration_stability(&suite))),
        ("8 end-to-end training improves IoU", Box::new(end_to_end)),
        ("9 pipeline rules vs oracles", Box::new(pipeline_rules)),
        ("10 box metrics and superpixel cut", Box::new(metrics)),
        ("11 determinism and formats", Box::new(|| determinism_and_formats(&suite))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
