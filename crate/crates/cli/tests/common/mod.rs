//! On-disk fixture banks shared by the CLI integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const SR: u32 = 16_000;
pub const LABELS: usize = 10;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sedsynth"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

pub fn write_wav(path: &Path, samples: &[f64]) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SR,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s as f32).unwrap();
    }
    w.finalize().unwrap();
}

/// Low noise floor with one sine burst on `[onset_s, onset_s + dur_s)`.
pub fn burst(total_s: f64, onset_s: f64, dur_s: f64, freq: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (total_s * SR as f64).round() as usize;
    let a = (onset_s * SR as f64).round() as usize;
    let b = ((onset_s + dur_s) * SR as f64).round() as usize;
    (0..n)
        .map(|i| {
            let floor = rng.gen_range(-1e-4..1e-4);
            if (a..b).contains(&i) {
                floor + 0.4 * (2.0 * std::f64::consts::PI * freq * i as f64 / SR as f64).sin()
            } else {
                floor
            }
        })
        .collect()
}

pub fn label(k: usize) -> String {
    format!("sound {k}")
}

/// `count` single-event source recordings over `LABELS` labels, plus the source manifest.
pub fn source_bank(dir: &Path, count: usize) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let audio_dir = dir.join("sources");
    fs::create_dir_all(&audio_dir).unwrap();
    let mut lines = Vec::new();
    for i in 0..count {
        let dur = rng.gen_range(1.2..5.0);
        let onset = rng.gen_range(0.2..(6.0 - dur));
        let samples = burst(6.0, onset, dur, 220.0 + 40.0 * i as f64, &mut rng);
        let name = format!("src{i:02}.wav");
        write_wav(&audio_dir.join(&name), &samples);
        lines.push(json!({"id": format!("src{i:02}"), "audio": format!("sources/{name}"), "label": label(i % LABELS)}).to_string());
    }
    let manifest = dir.join("sources.jsonl");
    fs::write(&manifest, lines.join("\n") + "\n").unwrap();
    manifest
}

pub fn backgrounds(dir: &Path, count: usize) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let bg_dir = dir.join("backgrounds");
    fs::create_dir_all(&bg_dir).unwrap();
    for i in 0..count {
        let n = 12 * SR as usize;
        let samples: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.03..0.03)).collect();
        write_wav(&bg_dir.join(format!("bg{i}.wav")), &samples);
    }
    bg_dir
}

pub const CLUSTERS: u32 = 40;
pub const EXTRA_PER_CLUSTER: usize = 3;

/// Centroids plus a phrase database in which label `k` sits in cluster `k`
/// and every cluster also holds `EXTRA_PER_CLUSTER` other phrases.
pub fn phrase_db(dir: &Path) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let centroids: Vec<String> = (0..CLUSTERS)
        .map(|c| {
            let e: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            json!({"cluster_id": c, "name": format!("cluster {c}"), "embedding": e}).to_string()
        })
        .collect();
    let mut phrases: Vec<String> = (0..LABELS)
        .map(|k| json!({"phrase": label(k), "cluster_id": k}).to_string())
        .collect();
    for c in 0..CLUSTERS {
        for j in 0..EXTRA_PER_CLUSTER {
            phrases.push(json!({"phrase": format!("phrase {c}.{j}"), "cluster_id": c}).to_string());
        }
    }
    let cp = dir.join("centroids.jsonl");
    let pp = dir.join("phrases.jsonl");
    fs::write(&cp, centroids.join("\n") + "\n").unwrap();
    fs::write(&pp, phrases.join("\n") + "\n").unwrap();
    (cp, pp)
}

pub fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Every regular file under `dir` as (relative path, bytes), sorted by path.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
