use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tempfile::TempDir;

use sedsynth::audio::{write_wav, AudioClip, WavWriteOptions, DEFAULT_SAMPLE_RATE};
use sedsynth::clipper::{clip_event_bank, ClipperParams, EVENTS_MANIFEST};
use sedsynth::dataset::{build_dataset, load_backgrounds, load_event_bank, BuildOptions, DATASET_MANIFEST};
use sedsynth::manifest::{self, DatasetRow};
use sedsynth::mixer::{AudioBank, MixParams, DEFAULT_TEMPLATE};
use sedsynth::par::Workers;
use sedsynth::sampler::{enrich_manifest, CentroidRecord, ClusterSpace, EnrichOptions, PhraseRecord};
use sedsynth::validate::{validate_manifest, ManifestKind, ValidateOptions};

const SR: u32 = DEFAULT_SAMPLE_RATE;

fn wav(path: &Path, samples: Vec<f64>) {
    write_wav(&AudioClip::new(samples, SR).unwrap(), path, WavWriteOptions::default()).unwrap();
}

fn sources(dir: &Path, rng: &mut ChaCha8Rng) -> std::path::PathBuf {
    fs::create_dir_all(dir.join("src")).unwrap();
    let mut lines = Vec::new();
    for i in 0..8 {
        let onset = rng.gen_range(0.3..1.0);
        let dur = rng.gen_range(1.5..4.0);
        let (a, b) = ((onset * SR as f64) as usize, ((onset + dur) * SR as f64) as usize);
        let freq = 300.0 + 50.0 * i as f64;
        let samples = (0..6 * SR as usize)
            .map(|n| {
                let floor = rng.gen_range(-1e-4..1e-4);
                if (a..b).contains(&n) {
                    floor + 0.5 * (2.0 * PI * freq * n as f64 / SR as f64).sin()
                } else {
                    floor
                }
            })
            .collect();
        wav(&dir.join(format!("src/s{i}.wav")), samples);
        lines.push(json!({"id": format!("s{i}"), "audio": format!("src/s{i}.wav"), "label": format!("label {}", i % 4)}).to_string());
    }
    // one silent recording that must end up in the rejection log
    wav(&dir.join("src/quiet.wav"), vec![0.0; 3 * SR as usize]);
    lines.push(json!({"id": "quiet", "audio": "src/quiet.wav", "label": "label 0"}).to_string());
    let path = dir.join("sources.jsonl");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn cluster_space() -> ClusterSpace {
    let centroids = (0..6)
        .map(|c| CentroidRecord {
            cluster_id: c,
            name: format!("cluster {c}"),
            embedding: (0..6).map(|k| if k == c as usize { 1.0 } else { 0.0 }).collect(),
        })
        .collect();
    let mut phrases: Vec<PhraseRecord> = (0..4)
        .map(|k| PhraseRecord {
            phrase: format!("label {k}"),
            embedding: None,
            cluster_id: Some(k),
        })
        .collect();
    for c in 0..6 {
        for j in 0..4 {
            phrases.push(PhraseRecord {
                phrase: format!("other {c}.{j}"),
                embedding: None,
                cluster_id: Some(c),
            });
        }
    }
    ClusterSpace::new(centroids, phrases).unwrap()
}

#[test]
fn library_pipeline_produces_valid_manifests() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let src = sources(dir, &mut rng);

    let bank_dir = dir.join("bank");
    let report = clip_event_bank(&src, &bank_dir, &ClipperParams::default(), SR, Workers::Auto).unwrap();
    assert_eq!(report.events.len(), 8);
    assert_eq!(report.rejections.len(), 1);
    assert_eq!(report.rejections[0].source_id, "quiet");
    let opts = ValidateOptions::default();
    let events_report = validate_manifest(&bank_dir.join(EVENTS_MANIFEST), &opts).unwrap();
    assert_eq!(events_report.kind, Some(ManifestKind::Event));
    assert!(events_report.is_ok(), "{:?}", events_report.violations);

    fs::create_dir_all(dir.join("bg")).unwrap();
    for i in 0..2 {
        wav(&dir.join(format!("bg/b{i}.wav")), (0..11 * SR as usize).map(|_| rng.gen_range(-0.02..0.02)).collect());
    }
    let events = load_event_bank(&bank_dir.join(EVENTS_MANIFEST), Workers::Auto).unwrap();
    let backgrounds = load_backgrounds(&dir.join("bg"), Workers::Auto).unwrap();
    let audio_bank = AudioBank::new(backgrounds, events).unwrap();
    let params = MixParams {
        seed: 5,
        ..MixParams::default()
    };
    let scenes_dir = dir.join("scenes");
    let build = BuildOptions {
        workers: Workers::Auto,
        emit_label_csv: true,
    };
    let rows = build_dataset(&audio_bank, &params, &[DEFAULT_TEMPLATE.to_string()], 12, &scenes_dir, build).unwrap();
    assert_eq!(rows.len(), 12);
    let on_disk: Vec<DatasetRow> = manifest::read_jsonl(scenes_dir.join(DATASET_MANIFEST)).unwrap();
    assert_eq!(on_disk, rows);
    let dataset_report = validate_manifest(&scenes_dir.join(DATASET_MANIFEST), &opts).unwrap();
    assert!(dataset_report.is_ok(), "{:?}", dataset_report.violations);

    let space = cluster_space();
    let enrich = EnrichOptions {
        n: 8,
        seed: 5,
        ..EnrichOptions::default()
    };
    let enriched = enrich_manifest(&rows, &space, &enrich, Workers::Auto).unwrap();
    let enriched_path = scenes_dir.join("enriched.jsonl");
    manifest::write_jsonl(&enriched_path, &enriched).unwrap();
    let strict = ValidateOptions {
        phrase_set_size: Some(8),
        clusters: Some(&space),
        ..ValidateOptions::default()
    };
    let enriched_report = validate_manifest(&enriched_path, &strict).unwrap();
    assert_eq!(enriched_report.kind, Some(ManifestKind::Enriched));
    assert!(enriched_report.is_ok(), "{:?}", enriched_report.violations);

    let again = enrich_manifest(&rows, &space, &enrich, Workers::Fixed(1)).unwrap();
    assert_eq!(again, enriched);
}
