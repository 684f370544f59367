//! Central finite-difference verification of the analytic gradients.

use serde::Serialize;

use super::{EmbeddingBatch, Gradients, LossKind, LossParams};
use crate::error::Result;
use crate::par::{self, Workers};

/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_ERROR_FLOOR: f64 = 1.0;

/// `|a − n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    GlobalAudio(usize, usize),
    Caption(usize, usize),
    Frame(usize, usize, usize),
    Phrase(usize, usize, usize),
    T,
    B,
    TFrame,
    BFrame,
}

impl Coordinate {
    /// Every coordinate the loss `kind` depends on.
    pub fn for_kind(kind: LossKind, batch: &EmbeddingBatch) -> Vec<Coordinate> {
        let clip = matches!(kind, LossKind::Clip | LossKind::Total | LossKind::Infonce);
        let frame = matches!(kind, LossKind::Frame | LossKind::Total);
        let mut out = Vec::new();
        let (b, d) = batch.global_audio.dim();
        if clip {
            for i in 0..b {
                for k in 0..d {
                    out.push(Coordinate::GlobalAudio(i, k));
                    out.push(Coordinate::Caption(i, k));
                }
            }
            out.push(Coordinate::T);
            if kind != LossKind::Infonce {
                out.push(Coordinate::B);
            }
        }
        if !frame {
            return out;
        }
        let (_, l, _) = batch.frames.dim();
        let (_, n, _) = batch.phrases.dim();
        for i in 0..b {
            for r in 0..l {
                for k in 0..d {
                    out.push(Coordinate::Frame(i, r, k));
                }
            }
            for r in 0..n {
                for k in 0..d {
                    out.push(Coordinate::Phrase(i, r, k));
                }
            }
        }
        out.extend([Coordinate::TFrame, Coordinate::BFrame]);
        out
    }

    fn shifted(self, batch: &EmbeddingBatch, params: &LossParams, delta: f64) -> (EmbeddingBatch, LossParams) {
        let mut batch = batch.clone();
        let mut params = *params;
        match self {
            Coordinate::GlobalAudio(i, k) => batch.global_audio[[i, k]] += delta,
            Coordinate::Caption(i, k) => batch.captions[[i, k]] += delta,
            Coordinate::Frame(i, r, k) => batch.frames[[i, r, k]] += delta,
            Coordinate::Phrase(i, r, k) => batch.phrases[[i, r, k]] += delta,
            Coordinate::T => params.t += delta,
            Coordinate::B => params.b += delta,
            Coordinate::TFrame => params.t_frame += delta,
            Coordinate::BFrame => params.b_frame += delta,
        }
        (batch, params)
    }

    fn read(self, g: &Gradients) -> f64 {
        match self {
            Coordinate::GlobalAudio(i, k) => g.global_audio[[i, k]],
            Coordinate::Caption(i, k) => g.captions[[i, k]],
            Coordinate::Frame(i, r, k) => g.frames[[i, r, k]],
            Coordinate::Phrase(i, r, k) => g.phrases[[i, r, k]],
            Coordinate::T => g.t,
            Coordinate::B => g.b,
            Coordinate::TFrame => g.t_frame,
            Coordinate::BFrame => g.b_frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<Coordinate>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares analytic gradients of `kind` against central differences with step
/// `epsilon` over every embedding coordinate and scalar parameter it depends on.
pub fn gradient_check(
    kind: LossKind,
    batch: &EmbeddingBatch,
    params: &LossParams,
    epsilon: f64,
) -> Result<GradCheckReport> {
    gradient_check_with(kind, batch, params, epsilon, Workers::Auto)
}

pub fn gradient_check_with(
    kind: LossKind,
    batch: &EmbeddingBatch,
    params: &LossParams,
    epsilon: f64,
    workers: Workers,
) -> Result<GradCheckReport> {
    let analytic = kind.evaluate(batch, params)?.grads;
    let coords = Coordinate::for_kind(kind, batch);
    let numeric = par::try_map_indexed(coords.len(), workers, |i| {
        let c = coords[i];
        let (bp, pp) = c.shifted(batch, params, epsilon);
        let (bm, pm) = c.shifted(batch, params, -epsilon);
        let plus = kind.value(&bp, &pp)?;
        let minus = kind.value(&bm, &pm)?;
        Ok((plus - minus) / (2.0 * epsilon))
    })?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: coords.len(),
    };
    for (c, n) in coords.into_iter().zip(numeric) {
        let a = c.read(&analytic);
        let err = relative_error(a, n);
        if report.worst.is_none() || err > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: err,
                worst: Some(c),
                analytic: a,
                numeric: n,
                coordinates: report.coordinates,
            };
        }
    }
    Ok(report)
}
