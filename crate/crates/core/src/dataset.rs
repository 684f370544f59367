//! Batch scene synthesis to WAV files plus a JSONL dataset manifest.

use std::fs;
use std::path::Path;

use crate::audio::{self, WavWriteOptions};
use crate::error::{Error, Result};
use crate::manifest::{self, BackgroundRecord, DatasetRow, EventRecord, SceneEvent};
use crate::mixer::{synthesize_scene, AudioBank, Background, BankEvent, MixParams, SyntheticScene};
use crate::par::{self, Workers};

pub const DATASET_MANIFEST: &str = "dataset.jsonl";

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:06}")
}

/// Loads the clipped event bank from an event manifest.
pub fn load_event_bank(events_manifest: &Path, workers: Workers) -> Result<Vec<BankEvent>> {
    let records: Vec<EventRecord> = manifest::read_jsonl(events_manifest)?;
    par::try_map_indexed(records.len(), workers, |i| {
        let rec = &records[i];
        let audio = audio::read_wav(manifest::resolve_relative(events_manifest, &rec.audio))?;
        Ok(BankEvent {
            id: rec.id.clone(),
            phrase: rec.label.clone(),
            audio,
        })
    })
}

/// Loads backgrounds from a directory of `.wav` files (id = file stem, sorted by name)
/// or from a JSONL list of `{"id", "audio"}`.
pub fn load_backgrounds(path: &Path, workers: Workers) -> Result<Vec<Background>> {
    let records: Vec<BackgroundRecord> = if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| BackgroundRecord {
                id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                audio: p.to_string_lossy().into_owned(),
            })
            .collect()
    } else {
        manifest::read_jsonl(path)?
    };
    par::try_map_indexed(records.len(), workers, |i| {
        let rec = &records[i];
        Ok(Background {
            id: rec.id.clone(),
            audio: audio::read_wav(manifest::resolve_relative(path, &rec.audio))?,
        })
    })
}

pub fn scene_row(scene: &SyntheticScene, audio_rel: String, params: &MixParams) -> DatasetRow {
    DatasetRow {
        id: scene_id(scene.recipe.scene_index),
        audio: audio_rel,
        caption: scene.caption.clone(),
        duration_s: params.timeline_s,
        events: scene
            .recipe
            .placements
            .iter()
            .map(|p| SceneEvent {
                phrase: p.phrase.clone(),
                onset_s: p.onset_s,
                offset_s: p.offset_s,
                snr_db: p.snr_db,
                embedding: None,
            })
            .collect(),
        rescale: scene.recipe.rescale,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    pub workers: Workers,
    /// Also write `labels/<scene>.csv`: one column per phrase, one row per frame.
    pub emit_label_csv: bool,
}

/// Synthesizes `count` scenes into `out_dir`; output does not depend on the worker count.
pub fn build_dataset(
    bank: &AudioBank,
    params: &MixParams,
    templates: &[String],
    count: usize,
    out_dir: &Path,
    opts: BuildOptions,
) -> Result<Vec<DatasetRow>> {
    params.validate()?;
    if count == 0 {
        return Err(Error::InvalidParam("scene count must be >= 1".into()));
    }
    if bank.backgrounds.is_empty() {
        return Err(Error::EmptyInput("backgrounds"));
    }
    if bank.events.is_empty() {
        return Err(Error::EmptyInput("event bank"));
    }
    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let labels_dir = out_dir.join("labels");
    if opts.emit_label_csv {
        fs::create_dir_all(&labels_dir).map_err(|e| Error::io(&labels_dir, e))?;
    }

    let rows = par::try_map_indexed(count, opts.workers, |index| {
        let scene_err = |e: Error| Error::Scene {
            index,
            source: Box::new(e),
        };
        let scene = synthesize_scene(bank, params, templates, index).map_err(scene_err)?;
        let id = scene_id(index);
        let rel = format!("audio/{id}.wav");
        audio::write_wav(&scene.audio, out_dir.join(&rel), WavWriteOptions::default()).map_err(scene_err)?;
        if opts.emit_label_csv {
            let path = labels_dir.join(format!("{id}.csv"));
            fs::write(&path, label_csv(&scene)).map_err(|e| scene_err(Error::io(&path, e)))?;
        }
        Ok(scene_row(&scene, rel, params))
    })?;
    manifest::write_jsonl(out_dir.join(DATASET_MANIFEST), &rows)?;
    Ok(rows)
}

fn label_csv(scene: &SyntheticScene) -> String {
    let mut out = scene
        .annotations
        .iter()
        .map(|(p, _)| format!("\"{}\"", p.replace('"', "\"\"")))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    let frames = scene.annotations.first().map_or(0, |(_, y)| y.len());
    for l in 0..frames {
        let row: Vec<&str> = scene
            .annotations
            .iter()
            .map(|(_, y)| if y.get(l) { "1" } else { "0" })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioClip;

    fn bank() -> AudioBank {
        let sr = 1000;
        let bg = |id: &str, amp: f64| Background {
            id: id.into(),
            audio: AudioClip::new((0..10_000).map(|i| amp * ((i % 7) as f64 - 3.0) / 3.0).collect(), sr).unwrap(),
        };
        let events = (0..6)
            .map(|k| BankEvent {
                id: format!("ev{k}"),
                phrase: format!("phrase {k}"),
                audio: AudioClip::new(
                    (0..(800 + 500 * k)).map(|i| ((i * (k + 2)) as f64 * 0.05).sin() * 0.4).collect(),
                    sr,
                )
                .unwrap(),
            })
            .collect();
        AudioBank::new(vec![bg("a", 0.05), bg("b", 0.1)], events).unwrap()
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let bank = bank();
        let params = MixParams {
            seed: 7,
            ..Default::default()
        };
        let t = vec!["Sounds of {}.".to_string()];
        let d1 = tempfile::tempdir().unwrap();
        let d8 = tempfile::tempdir().unwrap();
        let one = BuildOptions {
            workers: Workers::Fixed(1),
            emit_label_csv: true,
        };
        let eight = BuildOptions {
            workers: Workers::Fixed(8),
            emit_label_csv: true,
        };
        let r1 = build_dataset(&bank, &params, &t, 20, d1.path(), one).unwrap();
        let r8 = build_dataset(&bank, &params, &t, 20, d8.path(), eight).unwrap();
        assert_eq!(r1, r8);
        for i in 0..20 {
            let f = format!("audio/{}.wav", scene_id(i));
            assert_eq!(fs::read(d1.path().join(&f)).unwrap(), fs::read(d8.path().join(&f)).unwrap());
        }
        assert_eq!(
            fs::read(d1.path().join(DATASET_MANIFEST)).unwrap(),
            fs::read(d8.path().join(DATASET_MANIFEST)).unwrap()
        );
        let csv = fs::read_to_string(d1.path().join("labels/scene_000000.csv")).unwrap();
        assert_eq!(csv.lines().count(), 65);
    }

    #[test]
    fn zero_count_is_rejected() {
        let d = tempfile::tempdir().unwrap();
        let err = build_dataset(&bank(), &MixParams::default(), &["{}".into()], 0, d.path(), BuildOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::InvalidParam(_)));
    }

    #[test]
    fn scene_errors_report_index() {
        let mut b = bank();
        b.backgrounds = vec![Background {
            id: "short".into(),
            audio: AudioClip::new(vec![0.1; 500], 1000).unwrap(),
        }];
        let b = AudioBank::new(b.backgrounds, b.events).unwrap();
        let d = tempfile::tempdir().unwrap();
        let err = build_dataset(&b, &MixParams::default(), &["{}".into()], 3, d.path(), BuildOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Scene { index: 0, .. }), "{err}");
    }
}
