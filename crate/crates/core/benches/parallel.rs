use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sedsynth::audio::AudioClip;
use sedsynth::metrics::{psds, LabeledEvent, PsdsConfig};
use sedsynth::mixer::{synthesize_scene, AudioBank, Background, BankEvent, MixParams, DEFAULT_TEMPLATE};
use sedsynth::objectives::{gradient_check_with, EmbeddingBatch, LossKind, LossParams};
use sedsynth::par::{self, Workers};

const SR: u32 = 16_000;

fn noise(rng: &mut ChaCha8Rng, seconds: f64, amp: f64) -> AudioClip {
    let n = (seconds * SR as f64) as usize;
    AudioClip::new((0..n).map(|_| rng.gen_range(-amp..amp)).collect(), SR).unwrap()
}

fn bank() -> AudioBank {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let backgrounds = (0..4)
        .map(|i| Background {
            id: format!("bg{i}"),
            audio: noise(&mut rng, 12.0, 0.05),
        })
        .collect();
    let events = (0..12)
        .map(|i| BankEvent {
            id: format!("ev{i}"),
            phrase: format!("sound {}", i % 8),
            audio: noise(&mut rng, 1.0 + i as f64 * 0.4, 0.3),
        })
        .collect();
    AudioBank::new(backgrounds, events).unwrap()
}

fn batch(rng: &mut ChaCha8Rng) -> EmbeddingBatch {
    let (b, d, l, n) = (4, 16, 8, 6);
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    EmbeddingBatch::new(
        Array2::from_shape_vec((b, d), draw(b * d)).unwrap(),
        Array2::from_shape_vec((b, d), draw(b * d)).unwrap(),
        Array3::from_shape_vec((b, l, d), draw(b * l * d)).unwrap(),
        Array3::from_shape_vec((b, n, d), draw(b * n * d)).unwrap(),
        Array3::from_shape_vec((b, n, l), draw(b * n * l).into_iter().map(|v| (v > 0.0) as u8).collect()).unwrap(),
    )
    .unwrap()
}

fn events(rng: &mut ChaCha8Rng) -> (Vec<LabeledEvent>, Vec<LabeledEvent>) {
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for clip in 0..200 {
        let id = format!("clip{clip}");
        for _ in 0..3 {
            let label = format!("c{}", rng.gen_range(0..10));
            let on = rng.gen_range(0.0..8.0);
            gts.push(LabeledEvent::ground_truth(&id, &label, on, on + rng.gen_range(0.3..2.0)));
            let jitter = rng.gen_range(-0.3..0.3);
            dets.push(LabeledEvent::detection(&id, &label, on + jitter, on + jitter + 1.0, rng.gen()));
        }
    }
    (dets, gts)
}

fn modes() -> [(&'static str, Workers); 2] {
    [("sequential", Workers::Fixed(1)), ("parallel", Workers::Auto)]
}

fn scenes(c: &mut Criterion) {
    let bank = bank();
    let params = MixParams { seed: 7, ..Default::default() };
    let templates = vec![DEFAULT_TEMPLATE.to_string()];
    let mut group = c.benchmark_group("synthesize_32_scenes");
    group.sample_size(10);
    for (name, workers) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::try_map_indexed(32, workers, |i| synthesize_scene(&bank, &params, &templates, i)).unwrap())
        });
    }
    group.finish();
}

fn gradcheck(c: &mut Criterion) {
    let batch = batch(&mut ChaCha8Rng::seed_from_u64(2));
    let params = LossParams::default();
    let mut group = c.benchmark_group("gradient_check_total");
    group.sample_size(10);
    for (name, workers) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| gradient_check_with(LossKind::Total, &batch, &params, 1e-5, workers).unwrap())
        });
    }
    group.finish();
}

fn psds_sweep(c: &mut Criterion) {
    let (dets, gts) = events(&mut ChaCha8Rng::seed_from_u64(3));
    let config = PsdsConfig::default();
    let mut group = c.benchmark_group("psds_50_thresholds");
    for (name, workers) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| psds(&dets, &gts, 200.0 * 10.0 / 3600.0, &config, workers).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scenes, gradcheck, psds_sweep);
criterion_main!(benches);
