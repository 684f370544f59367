use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intersection ratios within this distance of a criterion count as meeting it.
const RATIO_TOLERANCE: f64 = 1e-9;

/// A labeled time interval. Detections carry a score, ground truths do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEvent {
    pub clip_id: String,
    pub label: String,
    pub onset_s: f64,
    pub offset_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl LabeledEvent {
    pub fn ground_truth(clip_id: &str, label: &str, onset_s: f64, offset_s: f64) -> Self {
        LabeledEvent {
            clip_id: clip_id.into(),
            label: label.into(),
            onset_s,
            offset_s,
            score: None,
        }
    }

    pub fn detection(clip_id: &str, label: &str, onset_s: f64, offset_s: f64, score: f64) -> Self {
        LabeledEvent {
            score: Some(score),
            ..Self::ground_truth(clip_id, label, onset_s, offset_s)
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }

    fn check(&self) -> Result<()> {
        if !(self.onset_s.is_finite() && self.offset_s.is_finite() && self.onset_s < self.offset_s) {
            return Err(Error::MalformedInterval(format!(
                "{} {:?} [{}, {}]",
                self.clip_id, self.label, self.onset_s, self.offset_s
            )));
        }
        Ok(())
    }
}

/// Converts a per-frame `L×C` score matrix into events for every class.
///
/// Frame `l` covers `[l·D/L, (l+1)·D/L)`. Runs of frames scoring at least `tau`
/// become events; runs whose gap is at most `merge_gap_s` are joined, and events
/// shorter than `min_event_s` are then dropped. Each event is scored with the
/// maximum frame score inside it.
pub fn binarize_scores(
    scores: ArrayView2<f64>,
    class_labels: &[String],
    clip_id: &str,
    duration_s: f64,
    tau: f64,
    min_event_s: f64,
    merge_gap_s: f64,
) -> Result<Vec<LabeledEvent>> {
    let (frames, classes) = scores.dim();
    if classes != class_labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{classes} score columns for {} class labels",
            class_labels.len()
        )));
    }
    let edge = |l: usize| l as f64 * duration_s / frames as f64;
    let mut out = Vec::new();
    for (c, label) in class_labels.iter().enumerate() {
        // (first frame, last frame, max score)
        let mut runs: Vec<(usize, usize, f64)> = Vec::new();
        for l in 0..frames {
            let s = scores[[l, c]];
            if s < tau {
                continue;
            }
            match runs.last_mut() {
                Some(run) if run.1 + 1 == l => {
                    run.1 = l;
                    run.2 = run.2.max(s);
                }
                _ => runs.push((l, l, s)),
            }
        }
        let mut merged: Vec<(usize, usize, f64)> = Vec::new();
        for run in runs {
            match merged.last_mut() {
                Some(prev) if edge(run.0) - edge(prev.1 + 1) <= merge_gap_s => {
                    prev.1 = run.1;
                    prev.2 = prev.2.max(run.2);
                }
                _ => merged.push(run),
            }
        }
        for (a, b, score) in merged {
            let (onset, offset) = (edge(a), edge(b + 1));
            if offset - onset < min_event_s {
                continue;
            }
            out.push(LabeledEvent::detection(clip_id, label, onset, offset, score));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub ground_truths: usize,
    pub true_positives: usize,
    pub false_positives: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub per_class: BTreeMap<String, ClassTally>,
}

/// Sorted, merged copy of a set of intervals.
fn union(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (a, b) in intervals {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn overlap_with(union: &[(f64, f64)], onset: f64, offset: f64) -> f64 {
    union
        .iter()
        .map(|&(a, b)| (offset.min(b) - onset.max(a)).max(0.0))
        .sum()
}

/// Detection- and ground-truth-tolerance matching.
///
/// A detection is valid when the fraction of it covered by same-class ground
/// truths in its clip is at least `dtc`; invalid detections are false positives.
/// A ground truth is a true positive when the fraction of it covered by valid
/// same-class detections is at least `gtc`.
pub fn match_events(dets: &[LabeledEvent], gts: &[LabeledEvent], dtc: f64, gtc: f64) -> Result<MatchResult> {
    for e in dets.iter().chain(gts) {
        e.check()?;
    }
    let mut gt_groups: HashMap<(&str, &str), Vec<(f64, f64)>> = HashMap::new();
    for g in gts {
        gt_groups
            .entry((&g.clip_id, &g.label))
            .or_default()
            .push((g.onset_s, g.offset_s));
    }
    let gt_unions: HashMap<_, _> = gt_groups.into_iter().map(|(k, v)| (k, union(v))).collect();

    let mut result = MatchResult::default();
    for g in gts {
        result.per_class.entry(g.label.clone()).or_default().ground_truths += 1;
    }

    let mut valid: HashMap<(&str, &str), Vec<(f64, f64)>> = HashMap::new();
    for d in dets {
        let key = (d.clip_id.as_str(), d.label.as_str());
        let covered = gt_unions
            .get(&key)
            .map_or(0.0, |u| overlap_with(u, d.onset_s, d.offset_s));
        if covered / d.duration_s() >= dtc - RATIO_TOLERANCE {
            valid.entry(key).or_default().push((d.onset_s, d.offset_s));
        } else {
            result.false_positives += 1;
            result.per_class.entry(d.label.clone()).or_default().false_positives += 1;
        }
    }
    let valid_unions: HashMap<_, _> = valid.into_iter().map(|(k, v)| (k, union(v))).collect();

    for g in gts {
        let key = (g.clip_id.as_str(), g.label.as_str());
        let covered = valid_unions
            .get(&key)
            .map_or(0.0, |u| overlap_with(u, g.onset_s, g.offset_s));
        if covered / g.duration_s() >= gtc - RATIO_TOLERANCE {
            result.true_positives += 1;
            result.per_class.entry(g.label.clone()).or_default().true_positives += 1;
        }
    }
    Ok(result)
}

const TSV_HEADER: [&str; 4] = ["clip_id", "onset_s", "offset_s", "label"];

/// Reads `clip_id  onset_s  offset_s  label  [score]` TSV with a header row.
pub fn read_events_tsv(path: &Path) -> Result<Vec<LabeledEvent>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let idx: Vec<usize> = TSV_HEADER
        .iter()
        .map(|n| find(n).ok_or_else(|| Error::parse(path, 1, format!("missing column {n}"))))
        .collect::<Result<_>>()?;
    let score_col = find("score");
    let mut out = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let get = |c: usize| {
            fields
                .get(c)
                .copied()
                .ok_or_else(|| Error::parse(path, i + 1, format!("missing field {c}")))
        };
        let num = |c: usize| -> Result<f64> {
            get(c)?.parse::<f64>().map_err(|e| Error::parse(path, i + 1, e))
        };
        let score = match score_col {
            Some(c) if fields.get(c).is_some_and(|s| !s.is_empty()) => Some(num(c)?),
            _ => None,
        };
        out.push(LabeledEvent {
            clip_id: get(idx[0])?.to_string(),
            onset_s: num(idx[1])?,
            offset_s: num(idx[2])?,
            label: get(idx[3])?.to_string(),
            score,
        });
    }
    Ok(out)
}

pub fn write_events_tsv(path: &Path, events: &[LabeledEvent]) -> Result<()> {
    let with_score = events.iter().any(|e| e.score.is_some());
    let mut out = TSV_HEADER.join("\t");
    if with_score {
        out.push_str("\tscore");
    }
    out.push('\n');
    for e in events {
        out.push_str(&format!("{}\t{}\t{}\t{}", e.clip_id, e.onset_s, e.offset_s, e.label));
        if with_score {
            out.push('\t');
            if let Some(s) = e.score {
                out.push_str(&s.to_string());
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn gt(on: f64, off: f64) -> LabeledEvent {
        LabeledEvent::ground_truth("c", "dog", on, off)
    }

    fn det(on: f64, off: f64) -> LabeledEvent {
        LabeledEvent::detection("c", "dog", on, off, 1.0)
    }

    #[test]
    fn binarize_cases() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let ones = Array2::ones((10, 2));
        let ev = binarize_scores(ones.view(), &labels, "x", 10.0, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.onset_s == 0.0 && e.offset_s == 10.0));

        let zeros = Array2::zeros((10, 2));
        assert!(binarize_scores(zeros.view(), &labels, "x", 10.0, 0.5, 0.0, 0.0).unwrap().is_empty());

        let mut s = Array2::zeros((10, 1));
        for l in 3..=5 {
            s[[l, 0]] = 1.0;
        }
        let ev = binarize_scores(s.view(), &labels[..1], "x", 10.0, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].onset_s, ev[0].offset_s), (3.0, 6.0));
    }

    #[test]
    fn binarize_merge_and_min_duration() {
        let mut s = Array2::zeros((10, 1));
        for l in [1, 2, 4, 8] {
            s[[l, 0]] = 0.9;
        }
        let labels = vec!["a".to_string()];
        let ev = binarize_scores(s.view(), &labels, "x", 10.0, 0.5, 0.0, 1.0).unwrap();
        let spans: Vec<_> = ev.iter().map(|e| (e.onset_s, e.offset_s)).collect();
        assert_eq!(spans, vec![(1.0, 5.0), (8.0, 9.0)]);
        let ev = binarize_scores(s.view(), &labels, "x", 10.0, 0.5, 1.5, 1.0).unwrap();
        assert_eq!(ev.len(), 1);
    }

    #[test]
    fn tolerance_boundaries() {
        let r = match_events(&[det(0.0, 10.0)], &[gt(0.0, 7.0)], 0.7, 0.7).unwrap();
        assert_eq!((r.true_positives, r.false_positives), (1, 0));
        let r = match_events(&[det(0.0, 10.0)], &[gt(0.0, 6.0)], 0.7, 0.7).unwrap();
        assert_eq!((r.true_positives, r.false_positives), (0, 1));
        let r = match_events(&[], &[gt(0.0, 6.0)], 0.7, 0.7).unwrap();
        assert_eq!((r.true_positives, r.false_positives), (0, 0));
        assert_eq!(r.per_class["dog"].ground_truths, 1);
    }

    #[test]
    fn classes_and_clips_do_not_mix() {
        let other_class = LabeledEvent::detection("c", "cat", 0.0, 7.0, 1.0);
        let other_clip = LabeledEvent::detection("d", "dog", 0.0, 7.0, 1.0);
        let r = match_events(&[other_class, other_clip], &[gt(0.0, 7.0)], 0.7, 0.7).unwrap();
        assert_eq!((r.true_positives, r.false_positives), (0, 2));
    }

    #[test]
    fn fragmented_detections_cover_jointly() {
        let r = match_events(&[det(0.0, 4.0), det(4.0, 8.0)], &[gt(0.0, 8.0)], 0.7, 0.7).unwrap();
        assert_eq!((r.true_positives, r.false_positives), (1, 0));
    }

    #[test]
    fn malformed_interval_is_an_error() {
        assert!(matches!(
            match_events(&[det(3.0, 2.0)], &[], 0.7, 0.7),
            Err(Error::MalformedInterval(_))
        ));
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tsv");
        let events = vec![det(0.5, 2.25), LabeledEvent::detection("z", "rain", 1.0, 3.0, 0.25)];
        write_events_tsv(&p, &events).unwrap();
        assert_eq!(read_events_tsv(&p).unwrap(), events);
        let g = dir.path().join("g.tsv");
        std::fs::write(&g, "label\tclip_id\tonset_s\toffset_s\ndog\tc\t1\t2\n").unwrap();
        assert_eq!(read_events_tsv(&g).unwrap(), vec![gt(1.0, 2.0)]);
    }

    proptest! {
        // dyadic times keep every difference exact, so ratios match bit for bit
        #[test]
        fn translation_invariant(
            shift in -400i32..400,
            spans in prop::collection::vec((0u32..160, 1u32..40), 1..6),
            dspans in prop::collection::vec((0u32..160, 1u32..40), 0..6),
        ) {
            let at = |v: u32| v as f64 / 8.0;
            let gts: Vec<_> = spans.iter().map(|&(a, l)| gt(at(a), at(a + l))).collect();
            let dets: Vec<_> = dspans.iter().map(|&(a, l)| det(at(a), at(a + l))).collect();
            let d = shift as f64 / 8.0;
            let moved = |v: &[LabeledEvent]| -> Vec<LabeledEvent> {
                v.iter().map(|e| LabeledEvent { onset_s: e.onset_s + d, offset_s: e.offset_s + d, ..e.clone() }).collect()
            };
            let a = match_events(&dets, &gts, 0.7, 0.7).unwrap();
            let b = match_events(&moved(&dets), &moved(&gts), 0.7, 0.7).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
