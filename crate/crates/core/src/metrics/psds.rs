use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::events::{match_events, LabeledEvent};
use crate::error::{Error, Result};
use crate::par::{self, Workers};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsdsConfig {
    pub dtc: f64,
    pub gtc: f64,
    pub alpha_st: f64,
    pub alpha_ct: f64,
    /// Upper bound of the false positive rate axis, in false positives per hour.
    pub e_max: f64,
    pub thresholds: Vec<f64>,
}

impl Default for PsdsConfig {
    fn default() -> Self {
        PsdsConfig {
            dtc: 0.7,
            gtc: 0.7,
            alpha_st: 1.0,
            alpha_ct: 0.0,
            e_max: 100.0,
            thresholds: Self::even_thresholds(50),
        }
    }
}

impl PsdsConfig {
    /// `count` thresholds evenly spaced strictly inside (0, 1).
    pub fn even_thresholds(count: usize) -> Vec<f64> {
        (1..=count).map(|k| k as f64 / (count + 1) as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.dtc) || !unit(self.gtc) {
            return Err(Error::InvalidParam(format!("dtc {} and gtc {} must lie in (0, 1]", self.dtc, self.gtc)));
        }
        if !(self.alpha_st >= 0.0 && self.alpha_st.is_finite()) {
            return Err(Error::InvalidParam(format!("alpha_st {} must be non-negative", self.alpha_st)));
        }
        if self.alpha_ct != 0.0 {
            return Err(Error::InvalidParam(format!(
                "cross-trigger penalty alpha_ct {} is not supported, only 0",
                self.alpha_ct
            )));
        }
        if !(self.e_max > 0.0 && self.e_max.is_finite()) {
            return Err(Error::InvalidParam(format!("e_max {} must be positive", self.e_max)));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParam("thresholds must be a non-empty list of finite values".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParam("thresholds must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub tau: f64,
    pub efpr: f64,
    pub eff_tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdsReport {
    pub psds: f64,
    pub per_threshold: Vec<OperatingPoint>,
    pub config: PsdsConfig,
}

/// Area under the upper staircase through `points` (`(efpr, tpr)` pairs) on
/// `[0, e_max]`, divided by `e_max`. The curve is zero left of the first point
/// and holds its last value up to `e_max`.
pub fn staircase_area(points: &[(f64, f64)], e_max: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut area = 0.0;
    let mut level = 0.0f64;
    for (k, &(x, y)) in pts.iter().enumerate() {
        if x >= e_max {
            break;
        }
        level = level.max(y);
        let next = pts.get(k + 1).map_or(e_max, |p| p.0.min(e_max));
        area += level * (next - x);
    }
    area / e_max
}

/// Polyphonic sound detection score over a set of clips totalling
/// `duration_h` hours.
///
/// At each threshold the detections scoring at least `tau` are matched; the
/// effective TPR is `max(0, mean − alpha_st·std)` of the per-class TPR over the
/// classes that have ground truth.
pub fn psds(
    dets: &[LabeledEvent],
    gts: &[LabeledEvent],
    duration_h: f64,
    config: &PsdsConfig,
    workers: Workers,
) -> Result<PsdsReport> {
    config.validate()?;
    if !(duration_h > 0.0 && duration_h.is_finite()) {
        return Err(Error::InvalidParam(format!("total duration {duration_h} h must be positive")));
    }
    if gts.is_empty() {
        return Err(Error::EmptyInput("ground truth"));
    }
    if let Some(d) = dets.iter().find(|d| !d.score.is_some_and(f64::is_finite)) {
        return Err(Error::InvalidParam(format!(
            "detection {} {:?} [{}, {}] has no finite score",
            d.clip_id, d.label, d.onset_s, d.offset_s
        )));
    }
    let classes: BTreeSet<&str> = gts.iter().map(|g| g.label.as_str()).collect();
    let per_threshold = par::try_map_indexed(config.thresholds.len(), workers, |k| {
        let tau = config.thresholds[k];
        let kept: Vec<LabeledEvent> = dets
            .iter()
            .filter(|d| d.score.is_some_and(|s| s >= tau))
            .cloned()
            .collect();
        let m = match_events(&kept, gts, config.dtc, config.gtc)?;
        let tprs: Vec<f64> = classes
            .iter()
            .map(|c| {
                let t = m.per_class[*c];
                t.true_positives as f64 / t.ground_truths as f64
            })
            .collect();
        let n = tprs.len() as f64;
        let mean = tprs.iter().sum::<f64>() / n;
        let std = (tprs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(OperatingPoint {
            tau,
            efpr: m.false_positives as f64 / duration_h,
            eff_tpr: (mean - config.alpha_st * std).max(0.0),
        })
    })?;
    let points: Vec<(f64, f64)> = per_threshold.iter().map(|p| (p.efpr, p.eff_tpr)).collect();
    Ok(PsdsReport {
        psds: staircase_area(&points, config.e_max),
        per_threshold,
        config: config.clone(),
    })
}
