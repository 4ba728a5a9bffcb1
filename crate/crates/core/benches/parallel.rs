//! Sequential (one worker) against pooled execution for the per-frame
//! stages. Build with `--no-default-features` to time the fallback path
//! compiled without rayon.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use motionseg::coloc::{colocalize_shot, ColocParams};
use motionseg::inference::{infer_labels, BatchFrame, InferenceParams};
use motionseg::synth::{scene, SceneSpec};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    [1, cores.max(2)]
        .into_iter()
        .map(|n| {
            let name = if n == 1 { "sequential".to_string() } else { format!("rayon-{n}") };
            (name, rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap())
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let mut spec = SceneSpec::new(1, 2, 7);
    spec.frames = 8;
    let shot = scene(&spec);
    let batch: Vec<BatchFrame> = shot
        .images
        .iter()
        .zip(&shot.masks)
        .zip(&shot.scores)
        .map(|((image, mask), scores)| BatchFrame { image, mask, scores })
        .collect();
    let infer_params = InferenceParams::training(7);
    let coloc_params = ColocParams { superpixels: 150, ..ColocParams::default() };

    let mut group = c.benchmark_group("infer_labels");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| infer_labels(black_box(&batch), &[1], &infer_params).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("colocalize_shot");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| colocalize_shot(black_box(&shot.images), &shot.scores, 1, &coloc_params).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
