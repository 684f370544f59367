//! Schema and invariant checks for every manifest the pipeline writes.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::labels::{labels_for_intervals, FrameLabels};
use crate::manifest::{resolve_relative, DatasetRow, EnrichedRow, EventRecord, RejectionRecord};
use crate::sampler::{positive_clusters, ClusterSpace, Positive};

/// Slack for comparing stored floating-point fields against their derived values.
const FIELD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestKind {
    Event,
    Rejection,
    Dataset,
    Enriched,
}

impl ManifestKind {
    /// Guesses the kind from the keys of one row.
    pub fn detect(row: &Value) -> Option<Self> {
        let has = |k: &str| row.get(k).is_some();
        if has("phrase_set") {
            Some(ManifestKind::Enriched)
        } else if has("events") {
            Some(ManifestKind::Dataset)
        } else if has("source_id") && has("onset_s") {
            Some(ManifestKind::Event)
        } else if has("source_id") && has("reason") {
            Some(ManifestKind::Rejection)
        } else {
            None
        }
    }
}

impl fmt::Display for ManifestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ManifestKind::Event => "event",
            ManifestKind::Rejection => "rejection",
            ManifestKind::Dataset => "dataset",
            ManifestKind::Enriched => "enriched",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// 1-based line in the manifest, 0 for file-level problems.
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub kind: Option<ManifestKind>,
    pub rows: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Limits the rows are checked against. `None` skips that check.
#[derive(Debug, Clone)]
pub struct ValidateOptions<'a> {
    pub kind: Option<ManifestKind>,
    pub check_audio: bool,
    pub event_duration_s: Option<(f64, f64)>,
    pub timeline_s: Option<f64>,
    pub max_events: Option<usize>,
    pub snr_db: Option<(f64, f64)>,
    pub frames: usize,
    pub phrase_set_size: Option<usize>,
    pub clusters: Option<&'a ClusterSpace>,
}

impl Default for ValidateOptions<'_> {
    fn default() -> Self {
        ValidateOptions {
            kind: None,
            check_audio: true,
            event_duration_s: Some((1.0, 7.5)),
            timeline_s: Some(10.0),
            max_events: Some(5),
            snr_db: Some((12.0, 20.0)),
            frames: 64,
            phrase_set_size: None,
            clusters: None,
        }
    }
}

struct Checker<'a, 'o> {
    path: &'a Path,
    opts: &'a ValidateOptions<'o>,
    violations: Vec<Violation>,
    ids: HashSet<String>,
    line: usize,
    id: Option<String>,
}

impl Checker<'_, '_> {
    fn fail(&mut self, message: impl Into<String>) {
        self.violations.push(Violation {
            line: self.line,
            id: self.id.clone(),
            message: message.into(),
        });
    }

    fn ensure(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.fail(message());
        }
    }

    fn parse<T: DeserializeOwned>(&mut self, row: Value) -> Option<T> {
        match serde_json::from_value(row) {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(format!("schema: {e}"));
                None
            }
        }
    }

    fn unique_id(&mut self, id: &str) {
        if !self.ids.insert(id.to_string()) {
            self.fail(format!("duplicate id {id:?}"));
        }
    }

    fn audio_exists(&mut self, audio: &str) {
        if self.opts.check_audio && !resolve_relative(self.path, audio).is_file() {
            self.fail(format!("audio file {audio:?} not found"));
        }
    }

    fn interval(&mut self, what: &str, onset: f64, offset: f64) -> bool {
        let ok = onset.is_finite() && offset.is_finite() && onset >= 0.0 && onset < offset;
        self.ensure(ok, || format!("{what} interval [{onset}, {offset}] must satisfy 0 ≤ onset_s < offset_s"));
        ok
    }

    fn event(&mut self, r: EventRecord) {
        self.unique_id(&r.id);
        if self.interval("event", r.onset_s, r.offset_s) {
            let d = r.offset_s - r.onset_s;
            self.ensure((r.duration_s - d).abs() <= FIELD_TOLERANCE, || {
                format!("duration_s {} differs from offset_s − onset_s = {d}", r.duration_s)
            });
        }
        if let Some((lo, hi)) = self.opts.event_duration_s {
            self.ensure(r.duration_s >= lo - FIELD_TOLERANCE && r.duration_s <= hi + FIELD_TOLERANCE, || {
                format!("duration_s {} outside [{lo}, {hi}]", r.duration_s)
            });
        }
        self.ensure(!r.label.trim().is_empty(), || "empty label".into());
        self.audio_exists(&r.audio);
    }

    fn rejection(&mut self, r: RejectionRecord) {
        self.ensure(!r.reason.trim().is_empty(), || format!("rejection of {:?} has no reason", r.source_id));
    }

    fn scene(&mut self, r: &DatasetRow) {
        self.unique_id(&r.id);
        self.audio_exists(&r.audio);
        self.ensure(!r.caption.trim().is_empty(), || "empty caption".into());
        if let Some(t) = self.opts.timeline_s {
            self.ensure((r.duration_s - t).abs() <= FIELD_TOLERANCE, || {
                format!("duration_s {} differs from the {t} s timeline", r.duration_s)
            });
        }
        self.ensure(r.rescale > 0.0 && r.rescale <= 1.0, || format!("rescale {} outside (0, 1]", r.rescale));
        let distinct: BTreeSet<&str> = r.events.iter().map(|e| e.phrase.as_str()).collect();
        let max = self.opts.max_events;
        self.ensure(!distinct.is_empty() && max.is_none_or(|m| distinct.len() <= m), || {
            format!("{} distinct event phrases, expected 1..={}", distinct.len(), max.unwrap_or(usize::MAX))
        });
        for (k, e) in r.events.iter().enumerate() {
            if !self.interval(&format!("events[{k}]"), e.onset_s, e.offset_s) {
                continue;
            }
            self.ensure(e.offset_s <= r.duration_s + FIELD_TOLERANCE, || {
                format!("events[{k}] ends at {} after the scene ({} s)", e.offset_s, r.duration_s)
            });
            if let Some((lo, hi)) = self.opts.snr_db {
                self.ensure(e.snr_db >= lo && e.snr_db <= hi, || {
                    format!("events[{k}] snr_db {} outside [{lo}, {hi}]", e.snr_db)
                });
            }
            if r.duration_s > 0.0 && self.opts.frames > 0 {
                let labels = labels_for_intervals(&[(e.onset_s, e.offset_s)], self.opts.frames, r.duration_s);
                self.ensure(!labels.is_all_zero(), || format!("events[{k}] covers no frame"));
            }
        }
    }

    fn enriched(&mut self, r: EnrichedRow) {
        self.scene(&r.scene);
        let set = &r.phrase_set;
        if let Some(n) = self.opts.phrase_set_size {
            self.ensure(set.len() == n, || format!("phrase_set has {} entries, expected {n}", set.len()));
        }
        let positives: Vec<&str> = set.iter().take_while(|p| p.positive).map(|p| p.phrase.as_str()).collect();
        self.ensure(set[positives.len()..].iter().all(|p| !p.positive), || {
            "positive phrases must precede negatives".into()
        });
        let mut seen = HashSet::new();
        if let Some(dup) = set.iter().find(|p| !seen.insert(p.phrase.as_str())) {
            let dup = dup.phrase.clone();
            self.fail(format!("phrase {dup:?} appears twice in phrase_set"));
        }
        let mut expected: Vec<&str> = Vec::new();
        for e in &r.scene.events {
            if !expected.contains(&e.phrase.as_str()) {
                expected.push(&e.phrase);
            }
        }
        self.ensure(positives == expected, || {
            format!("positive phrases {positives:?} differ from the scene's event phrases {expected:?}")
        });
        if let Some(space) = self.opts.clusters {
            let pos: Vec<Positive> = r
                .scene
                .events
                .iter()
                .filter(|e| positives.contains(&e.phrase.as_str()))
                .map(|e| Positive {
                    phrase: e.phrase.clone(),
                    labels: FrameLabels::zeros(0),
                    embedding: e.embedding.clone(),
                })
                .collect();
            match positive_clusters(&pos, space) {
                Ok(excluded) => {
                    for p in set.iter().filter(|p| !p.positive) {
                        match space.cluster_of(&p.phrase) {
                            Some(c) if excluded.contains(&c) => {
                                self.fail(format!("negative {:?} shares cluster {} with a positive", p.phrase, c.0))
                            }
                            Some(_) => {}
                            None => self.fail(format!("negative {:?} is not in the phrase database", p.phrase)),
                        }
                    }
                }
                Err(e) => self.fail(format!("cannot resolve positive clusters: {e}")),
            }
        }
    }
}

/// Validates a JSONL manifest, detecting its kind from the first row unless
/// `opts.kind` is set. Only an unreadable file is an error; everything else is
/// reported as a violation.
pub fn validate_manifest(path: &Path, opts: &ValidateOptions) -> Result<ValidationReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut checker = Checker {
        path,
        opts,
        violations: Vec::new(),
        ids: HashSet::new(),
        line: 0,
        id: None,
    };
    let mut kind = opts.kind;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        checker.line = i + 1;
        checker.id = None;
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                checker.fail(format!("not valid JSON: {e}"));
                continue;
            }
        };
        checker.id = value
            .get("id")
            .or_else(|| value.get("source_id"))
            .and_then(Value::as_str)
            .map(str::to_string);
        let k = match kind {
            Some(k) => k,
            None => match ManifestKind::detect(&value) {
                Some(k) => *kind.insert(k),
                None => {
                    checker.fail("cannot tell the manifest kind from this row");
                    continue;
                }
            },
        };
        match k {
            ManifestKind::Event => {
                if let Some(r) = checker.parse(value) {
                    checker.event(r);
                }
            }
            ManifestKind::Rejection => {
                if let Some(r) = checker.parse(value) {
                    checker.rejection(r);
                }
            }
            ManifestKind::Dataset => {
                if let Some(r) = checker.parse::<DatasetRow>(value) {
                    checker.scene(&r);
                }
            }
            ManifestKind::Enriched => {
                if let Some(r) = checker.parse(value) {
                    checker.enriched(r);
                }
            }
        }
    }
    Ok(ValidationReport {
        kind,
        rows,
        violations: checker.violations,
    })
}
