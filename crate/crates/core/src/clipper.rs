//! Window-based energy clipping of single-event segments from source recordings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioClip, Decibels, WavWriteOptions};
use crate::error::{Error, Result};
use crate::manifest::{self, EventRecord, RejectionRecord, SourceRecord};
use crate::par::{self, Workers};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClipperParams {
    /// Activity threshold in dBFS on the per-window mean energy.
    pub threshold_db: f64,
    pub window_s: f64,
    pub hop_s: f64,
    /// Longest run of inactive windows, in seconds, still bridged inside one segment.
    pub merge_gap_s: f64,
    pub min_dur_s: f64,
    pub max_dur_s: f64,
}

impl Default for ClipperParams {
    fn default() -> Self {
        Self {
            threshold_db: -20.0,
            window_s: 0.10,
            hop_s: 0.05,
            merge_gap_s: 0.20,
            min_dur_s: 1.0,
            max_dur_s: 7.5,
        }
    }
}

impl ClipperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_s > 0.0 && self.window_s >= self.hop_s) {
            return Err(Error::InvalidParam(format!(
                "need window_s >= hop_s > 0, got window_s={} hop_s={}",
                self.window_s, self.hop_s
            )));
        }
        if !(self.merge_gap_s >= 0.0) {
            return Err(Error::InvalidParam("merge_gap_s must be >= 0".into()));
        }
        if !(self.min_dur_s > 0.0 && self.min_dur_s <= self.max_dur_s) {
            return Err(Error::InvalidParam(format!(
                "need 0 < min_dur_s <= max_dur_s, got {} and {}",
                self.min_dur_s, self.max_dur_s
            )));
        }
        if !self.threshold_db.is_finite() {
            return Err(Error::InvalidParam("threshold_db must be finite".into()));
        }
        Ok(())
    }
}

/// Mean energy per sliding window, in dBFS.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEnvelope {
    pub window_db: Vec<Decibels>,
    pub window_s: f64,
    pub hop_s: f64,
    window_len: usize,
    hop_len: usize,
    sample_rate: u32,
}

impl EnergyEnvelope {
    pub fn len(&self) -> usize {
        self.window_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window_db.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop_len(&self) -> usize {
        self.hop_len
    }

    /// Sample span `[start, end)` of window `i`.
    pub fn window_span(&self, i: usize) -> (usize, usize) {
        let start = i * self.hop_len;
        (start, start + self.window_len)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

pub fn energy_envelope(clip: &AudioClip, window_s: f64, hop_s: f64) -> Result<EnergyEnvelope> {
    if !(hop_s > 0.0 && window_s >= hop_s) {
        return Err(Error::InvalidParam(format!(
            "need window_s >= hop_s > 0, got window_s={window_s} hop_s={hop_s}"
        )));
    }
    let window_len = clip.samples_for(window_s).max(1);
    let hop_len = clip.samples_for(hop_s).max(1);
    if clip.len() < window_len {
        return Err(Error::ClipTooShort {
            duration_s: clip.duration_s(),
            window_s,
        });
    }
    let count = (clip.len() - window_len) / hop_len + 1;
    let samples = clip.samples();
    let window_db = (0..count)
        .map(|i| {
            let start = i * hop_len;
            let w = &samples[start..start + window_len];
            let energy = w.iter().map(|x| x * x).sum::<f64>() / window_len as f64;
            Decibels::from_power(energy)
        })
        .collect();
    Ok(EnergyEnvelope {
        window_db,
        window_s,
        hop_s,
        window_len,
        hop_len,
        sample_rate: clip.sample_rate(),
    })
}

/// Inclusive window-index range of the first active run, gaps up to `merge_gap_s` bridged.
pub fn first_active_run(env: &EnergyEnvelope, threshold: Decibels, merge_gap_s: f64) -> Option<(usize, usize)> {
    // tolerance keeps e.g. 4 * 0.05 from failing a 0.20 s gap on rounding
    let max_gap_windows = ((merge_gap_s / env.hop_s) + 1e-9).floor() as usize;
    let mut run: Option<(usize, usize)> = None;
    for (i, db) in env.window_db.iter().enumerate() {
        if db.value() < threshold.value() {
            continue;
        }
        match run {
            None => run = Some((i, i)),
            Some((start, last)) => {
                if i - last - 1 <= max_gap_windows {
                    run = Some((start, i));
                } else {
                    break;
                }
            }
        }
    }
    run
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSegment {
    pub source_id: String,
    pub onset_s: f64,
    pub offset_s: f64,
    pub audio: AudioClip,
    pub label: String,
}

impl EventSegment {
    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }
}

/// Why a source did or did not yield a segment.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentDecision {
    Accepted { start: usize, end: usize },
    NoActiveRegion,
    DurationOutOfRange { duration_s: f64 },
}

pub fn decide_segment(clip: &AudioClip, params: &ClipperParams) -> Result<SegmentDecision> {
    params.validate()?;
    let env = energy_envelope(clip, params.window_s, params.hop_s)?;
    let Some((first, last)) = first_active_run(&env, Decibels(params.threshold_db), params.merge_gap_s)
    else {
        return Ok(SegmentDecision::NoActiveRegion);
    };
    let start = env.window_span(first).0;
    let end = env.window_span(last).1.min(clip.len());
    let duration_s = (end - start) as f64 / clip.sample_rate() as f64;
    // small slack so that exactly 1.0 s or 7.5 s survive sample rounding
    let eps = 0.5 / clip.sample_rate() as f64;
    if duration_s + eps < params.min_dur_s || duration_s - eps > params.max_dur_s {
        return Ok(SegmentDecision::DurationOutOfRange { duration_s });
    }
    Ok(SegmentDecision::Accepted { start, end })
}

/// Cuts the first high-energy run of `clip`, or `None` when there is none of acceptable length.
pub fn extract_event_segment(
    clip: &AudioClip,
    params: &ClipperParams,
    source_id: &str,
    label: &str,
) -> Result<Option<EventSegment>> {
    match decide_segment(clip, params)? {
        SegmentDecision::Accepted { start, end } => {
            let sr = clip.sample_rate() as f64;
            Ok(Some(EventSegment {
                source_id: source_id.to_string(),
                onset_s: start as f64 / sr,
                offset_s: end as f64 / sr,
                audio: clip.slice(start, end),
                label: label.to_string(),
            }))
        }
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BankReport {
    pub events: Vec<EventRecord>,
    pub rejections: Vec<RejectionRecord>,
}

pub const EVENTS_MANIFEST: &str = "events.jsonl";
pub const REJECTIONS_LOG: &str = "rejections.jsonl";

enum SourceOutcome {
    Accepted(EventRecord),
    Rejected { reason: String, readable: bool },
}

/// Clips every source in `input_manifest`, writing `events/*.wav`, the event manifest
/// and the rejection log into `output_dir`.
pub fn clip_event_bank(
    input_manifest: &Path,
    output_dir: &Path,
    params: &ClipperParams,
    sample_rate: u32,
    workers: Workers,
) -> Result<BankReport> {
    params.validate()?;
    let sources: Vec<SourceRecord> = manifest::read_jsonl(input_manifest)?;
    if sources.is_empty() {
        return Err(Error::NoInputs);
    }
    let events_dir = output_dir.join("events");
    fs::create_dir_all(&events_dir).map_err(|e| Error::io(&events_dir, e))?;

    let outcomes = par::try_map_indexed(sources.len(), workers, |i| {
        clip_one(&sources[i], input_manifest, output_dir, params, sample_rate)
    })?;

    if outcomes
        .iter()
        .all(|o| matches!(o, SourceOutcome::Rejected { readable: false, .. }))
    {
        return Err(Error::NoReadableInputs(sources.len()));
    }

    let mut report = BankReport::default();
    for (source, outcome) in sources.iter().zip(outcomes) {
        match outcome {
            SourceOutcome::Accepted(rec) => report.events.push(rec),
            SourceOutcome::Rejected { reason, .. } => report.rejections.push(RejectionRecord {
                source_id: source.id.clone(),
                reason,
            }),
        }
    }
    manifest::write_jsonl(output_dir.join(EVENTS_MANIFEST), &report.events)?;
    manifest::write_jsonl(output_dir.join(REJECTIONS_LOG), &report.rejections)?;
    Ok(report)
}

fn clip_one(
    source: &SourceRecord,
    input_manifest: &Path,
    output_dir: &Path,
    params: &ClipperParams,
    sample_rate: u32,
) -> Result<SourceOutcome> {
    let path = manifest::resolve_relative(input_manifest, &source.audio);
    let clip = match audio::read_wav(&path) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("skipping source {}: {e}", source.id);
            return Ok(SourceOutcome::Rejected {
                reason: format!("unreadable: {e}"),
                readable: false,
            });
        }
    };
    if clip.sample_rate() != sample_rate {
        return Ok(SourceOutcome::Rejected {
            reason: format!(
                "sample rate mismatch: expected {sample_rate} Hz, got {} Hz",
                clip.sample_rate()
            ),
            readable: true,
        });
    }
    let decision = match decide_segment(&clip, params) {
        Ok(d) => d,
        Err(Error::ClipTooShort { duration_s, .. }) => {
            return Ok(SourceOutcome::Rejected {
                reason: format!("source shorter than one window ({duration_s} s)"),
                readable: true,
            })
        }
        Err(e) => return Err(e),
    };
    let (start, end) = match decision {
        SegmentDecision::Accepted { start, end } => (start, end),
        SegmentDecision::NoActiveRegion => {
            return Ok(SourceOutcome::Rejected {
                reason: "no window above threshold".into(),
                readable: true,
            })
        }
        SegmentDecision::DurationOutOfRange { duration_s } => {
            return Ok(SourceOutcome::Rejected {
                reason: format!(
                    "segment duration {duration_s} s outside [{}, {}] s",
                    params.min_dur_s, params.max_dur_s
                ),
                readable: true,
            })
        }
    };
    let segment = clip.slice(start, end);
    let rel = format!("events/{}.wav", file_stem_for(&source.id));
    audio::write_wav(&segment, output_dir.join(&rel), WavWriteOptions::default())?;
    let sr = sample_rate as f64;
    let onset_s = start as f64 / sr;
    let offset_s = end as f64 / sr;
    Ok(SourceOutcome::Accepted(EventRecord {
        id: source.id.clone(),
        audio: rel,
        label: source.label.clone(),
        source_id: source.id.clone(),
        onset_s,
        offset_s,
        duration_s: (end - start) as f64 / sr,
    }))
}

/// File-system-safe stem for an identifier.
pub(crate) fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const SR: u32 = 16_000;

    fn tone_fixture(spans: &[(f64, f64)], total_s: f64, amp: f64) -> AudioClip {
        let n = audio::seconds_to_samples(total_s, SR);
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / SR as f64;
                if spans.iter().any(|&(a, b)| t >= a && t < b) {
                    amp * (2.0 * PI * 440.0 * t).sin()
                } else {
                    0.0
                }
            })
            .collect();
        AudioClip::new(samples, SR).unwrap()
    }

    #[test]
    fn envelope_of_constants() {
        let p = ClipperParams::default();
        let ones = AudioClip::new(vec![1.0; 16_000], SR).unwrap();
        let env = energy_envelope(&ones, p.window_s, p.hop_s).unwrap();
        assert_eq!(env.len(), 19);
        assert!(env.window_db.iter().all(|d| d.value() == 0.0));

        let zeros = AudioClip::silence(16_000, SR).unwrap();
        let env = energy_envelope(&zeros, p.window_s, p.hop_s).unwrap();
        assert!(env.window_db.iter().all(|d| d.value() == -120.0));

        let tenth = AudioClip::new(vec![0.1; 16_000], SR).unwrap();
        let env = energy_envelope(&tenth, p.window_s, p.hop_s).unwrap();
        // direct summation oracle for one window
        let direct = 10.0 * (tenth.samples()[..1600].iter().map(|x| x * x).sum::<f64>() / 1600.0).log10();
        for d in &env.window_db {
            assert!((d.value() + 20.0).abs() < 1e-9);
            assert!((d.value() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_errors() {
        let short = AudioClip::silence(100, SR).unwrap();
        assert!(matches!(
            energy_envelope(&short, 0.1, 0.05),
            Err(Error::ClipTooShort { .. })
        ));
        let ok = AudioClip::silence(16_000, SR).unwrap();
        assert!(energy_envelope(&ok, 0.05, 0.1).is_err());
        assert!(energy_envelope(&ok, 0.1, 0.0).is_err());
    }

    #[test]
    fn tone_between_silences() {
        let clip = tone_fixture(&[(2.0, 5.0)], 8.0, 0.5);
        let p = ClipperParams::default();
        let seg = extract_event_segment(&clip, &p, "src", "beep").unwrap().unwrap();
        assert!((seg.onset_s - 2.0).abs() <= p.hop_s + 1e-9, "onset {}", seg.onset_s);
        assert!((seg.offset_s - 5.0).abs() <= p.hop_s + 1e-9, "offset {}", seg.offset_s);
        assert!((seg.duration_s() - 3.0).abs() <= 2.0 * p.hop_s + 1e-9);
        assert_eq!(seg.audio.len(), audio::seconds_to_samples(seg.duration_s(), SR));
        assert_eq!(seg.label, "beep");
    }

    #[test]
    fn silent_and_short_sources_yield_none() {
        let p = ClipperParams::default();
        let silent = AudioClip::silence(8 * SR as usize, SR).unwrap();
        assert_eq!(extract_event_segment(&silent, &p, "s", "x").unwrap(), None);
        let burst = tone_fixture(&[(3.0, 3.4)], 8.0, 0.5);
        assert_eq!(extract_event_segment(&burst, &p, "s", "x").unwrap(), None);
        assert!(matches!(
            decide_segment(&burst, &p).unwrap(),
            SegmentDecision::DurationOutOfRange { .. }
        ));
    }

    #[test]
    fn first_run_wins_and_small_dips_merge() {
        let p = ClipperParams::default();
        // 0.1 s dip is bridged, 1 s pause is not
        let clip = tone_fixture(&[(1.0, 2.5), (2.6, 3.5), (4.5, 7.0)], 8.0, 0.5);
        let seg = extract_event_segment(&clip, &p, "s", "x").unwrap().unwrap();
        assert!((seg.onset_s - 1.0).abs() <= p.hop_s + 1e-9);
        assert!((seg.offset_s - 3.5).abs() <= p.hop_s + 1e-9);
    }

    #[test]
    fn overlong_run_is_rejected() {
        let p = ClipperParams::default();
        let clip = tone_fixture(&[(0.5, 9.5)], 10.0, 0.5);
        assert!(matches!(
            decide_segment(&clip, &p).unwrap(),
            SegmentDecision::DurationOutOfRange { .. }
        ));
    }

    #[test]
    fn shifting_the_burst_shifts_the_onset() {
        let p = ClipperParams::default();
        let base = extract_event_segment(&tone_fixture(&[(1.0, 3.0)], 8.0, 0.5), &p, "s", "x")
            .unwrap()
            .unwrap();
        for shift in [0.37, 1.0, 2.21] {
            let moved = tone_fixture(&[(1.0 + shift, 3.0 + shift)], 8.0, 0.5);
            let seg = extract_event_segment(&moved, &p, "s", "x").unwrap().unwrap();
            assert!((seg.onset_s - base.onset_s - shift).abs() <= p.hop_s + 1e-9);
        }
    }

    #[test]
    fn gain_shifts_envelope_exactly() {
        let clip = tone_fixture(&[(0.5, 1.5)], 2.0, 0.3);
        let env = energy_envelope(&clip, 0.1, 0.05).unwrap();
        for g in [-12.0, 3.0, 9.5] {
            let scaled = clip.scaled(audio::db_to_linear(Decibels(g)));
            let env2 = energy_envelope(&scaled, 0.1, 0.05).unwrap();
            for (a, b) in env.window_db.iter().zip(&env2.window_db) {
                if !a.is_silence_floor() && !b.is_silence_floor() {
                    assert!((b.value() - a.value() - g).abs() < 1e-9);
                }
            }
        }
    }
}
