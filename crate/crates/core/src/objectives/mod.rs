//! Clip- and frame-level sigmoid alignment losses and the InfoNCE baseline,
//! each with analytic gradients for every embedding and scalar parameter.
//!
//! All reductions run sequentially in row-major order, so values are
//! bit-reproducible for a given input.

pub mod fixtures;
mod gradcheck;
mod infonce;
mod sigmoid;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gradcheck::{
    gradient_check, gradient_check_with, relative_error, Coordinate, GradCheckReport, RELATIVE_ERROR_FLOOR,
};
pub use infonce::{infonce_loss, infonce_value};
pub use sigmoid::{clip_sigmoid_loss, clip_sigmoid_value, frame_sigmoid_loss, frame_sigmoid_value, total_loss};

/// Embeddings and labels for one batch.
///
/// Shapes: `global_audio` and `captions` are `B×d`, `frames` is `B×L×d`,
/// `phrases` is `B×N×d`, `labels` is `B×N×L` with 0/1 entries and `matches`
/// is `B×B` with 0/1 entries. Clips with `annotated[i] == false` have no
/// phrase set; they take no part in the frame-level loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub global_audio: Array2<f64>,
    pub captions: Array2<f64>,
    pub frames: Array3<f64>,
    pub phrases: Array3<f64>,
    pub labels: Array3<u8>,
    pub matches: Array2<u8>,
    pub annotated: Vec<bool>,
}

impl EmbeddingBatch {
    /// Batch with every clip annotated and identity pairing.
    pub fn new(
        global_audio: Array2<f64>,
        captions: Array2<f64>,
        frames: Array3<f64>,
        phrases: Array3<f64>,
        labels: Array3<u8>,
    ) -> Result<Self> {
        let b = global_audio.nrows();
        let batch = EmbeddingBatch {
            global_audio,
            captions,
            frames,
            phrases,
            labels,
            matches: Array2::eye(b),
            annotated: vec![true; b],
        };
        batch.validate()?;
        Ok(batch)
    }

    /// Batch with clip-level pairs only (no frame annotations).
    pub fn clip_only(global_audio: Array2<f64>, captions: Array2<f64>) -> Result<Self> {
        let (b, d) = global_audio.dim();
        let batch = EmbeddingBatch {
            global_audio,
            captions,
            frames: Array3::zeros((b, 0, d)),
            phrases: Array3::zeros((b, 0, d)),
            labels: Array3::zeros((b, 0, 0)),
            matches: Array2::eye(b),
            annotated: vec![false; b],
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn with_matches(mut self, matches: Array2<u8>) -> Result<Self> {
        self.matches = matches;
        self.validate()?;
        Ok(self)
    }

    pub fn with_annotated(mut self, annotated: Vec<bool>) -> Result<Self> {
        self.annotated = annotated;
        self.validate()?;
        Ok(self)
    }

    pub fn batch_size(&self) -> usize {
        self.global_audio.nrows()
    }

    pub fn dim(&self) -> usize {
        self.global_audio.ncols()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.dim().1
    }

    pub fn phrase_count(&self) -> usize {
        self.phrases.dim().1
    }

    pub fn validate(&self) -> Result<()> {
        let (b, d) = self.global_audio.dim();
        let mismatch = |m: String| Err(Error::DimensionMismatch(m));
        if b == 0 {
            return Err(Error::EmptyInput("batch"));
        }
        if self.captions.dim() != (b, d) {
            return mismatch(format!("captions {:?}, expected {:?}", self.captions.dim(), (b, d)));
        }
        let (fb, l, fd) = self.frames.dim();
        if fb != b || fd != d {
            return mismatch(format!("frames {:?}, expected ({b}, L, {d})", self.frames.dim()));
        }
        let (pb, n, pd) = self.phrases.dim();
        if pb != b || pd != d {
            return mismatch(format!("phrases {:?}, expected ({b}, N, {d})", self.phrases.dim()));
        }
        let expected_labels = if n == 0 || l == 0 { None } else { Some((b, n, l)) };
        if let Some(shape) = expected_labels {
            if self.labels.dim() != shape {
                return mismatch(format!("labels {:?}, expected {shape:?}", self.labels.dim()));
            }
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidParam("labels must be 0 or 1".into()));
        }
        if self.matches.dim() != (b, b) {
            return mismatch(format!("match matrix {:?}, expected ({b}, {b})", self.matches.dim()));
        }
        if self.matches.iter().any(|&z| z > 1) {
            return Err(Error::InvalidParam("match entries must be 0 or 1".into()));
        }
        if self.annotated.len() != b {
            return mismatch(format!("annotated flags {}, expected {b}", self.annotated.len()));
        }
        fn finite<'a>(name: &str, mut it: impl Iterator<Item = &'a f64>) -> Result<()> {
            if it.any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.to_string()));
            }
            Ok(())
        }
        finite("global_audio", self.global_audio.iter())?;
        finite("captions", self.captions.iter())?;
        finite("frames", self.frames.iter())?;
        finite("phrases", self.phrases.iter())?;
        Ok(())
    }
}

/// How the bias enters the pairwise exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Pair term `log(1 + exp(z·(−t·s + b)))`.
    #[default]
    AsPrinted,
    /// Pair term `log(1 + exp(−z·(t·s + b)))`.
    Siglip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossParams {
    /// Clip-level temperature.
    pub t: f64,
    /// Clip-level bias.
    pub b: f64,
    /// Frame-level temperature.
    pub t_frame: f64,
    /// Frame-level bias.
    pub b_frame: f64,
    pub convention: SignConvention,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            t: 10.0,
            b: -10.0,
            t_frame: 10.0,
            b_frame: -10.0,
            convention: SignConvention::AsPrinted,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t", self.t), ("b", self.b), ("t_frame", self.t_frame), ("b_frame", self.b_frame)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("loss parameter {name}")));
            }
        }
        if self.t <= 0.0 || self.t_frame <= 0.0 {
            log::warn!("non-positive temperature (t={}, t_frame={})", self.t, self.t_frame);
        }
        Ok(())
    }
}

/// Adjoints of a loss with respect to every input; shapes mirror the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub global_audio: Array2<f64>,
    pub captions: Array2<f64>,
    pub frames: Array3<f64>,
    pub phrases: Array3<f64>,
    pub t: f64,
    pub b: f64,
    pub t_frame: f64,
    pub b_frame: f64,
}

impl Gradients {
    pub fn zeros_like(batch: &EmbeddingBatch) -> Self {
        Gradients {
            global_audio: Array2::zeros(batch.global_audio.raw_dim()),
            captions: Array2::zeros(batch.captions.raw_dim()),
            frames: Array3::zeros(batch.frames.raw_dim()),
            phrases: Array3::zeros(batch.phrases.raw_dim()),
            t: 0.0,
            b: 0.0,
            t_frame: 0.0,
            b_frame: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.global_audio += &other.global_audio;
        self.captions += &other.captions;
        self.frames += &other.frames;
        self.phrases += &other.phrases;
        self.t += other.t;
        self.b += other.b;
        self.t_frame += other.t_frame;
        self.b_frame += other.b_frame;
    }

    pub fn is_finite(&self) -> bool {
        self.global_audio.iter().all(|x| x.is_finite())
            && self.captions.iter().all(|x| x.is_finite())
            && self.frames.iter().all(|x| x.is_finite())
            && self.phrases.iter().all(|x| x.is_finite())
            && [self.t, self.b, self.t_frame, self.b_frame].iter().all(|x| x.is_finite())
    }

    /// Frobenius norms per input, for reporting.
    pub fn norms(&self) -> GradientNorms {
        fn fro<'a>(it: impl Iterator<Item = &'a f64>) -> f64 {
            it.fold(0.0, |acc, x| acc + x * x).sqrt()
        }
        GradientNorms {
            global_audio: fro(self.global_audio.iter()),
            captions: fro(self.captions.iter()),
            frames: fro(self.frames.iter()),
            phrases: fro(self.phrases.iter()),
            t: self.t.abs(),
            b: self.b.abs(),
            t_frame: self.t_frame.abs(),
            b_frame: self.b_frame.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientNorms {
    pub global_audio: f64,
    pub captions: f64,
    pub frames: f64,
    pub phrases: f64,
    pub t: f64,
    pub b: f64,
    pub t_frame: f64,
    pub b_frame: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Gradients,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Clip,
    Frame,
    Total,
    Infonce,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Clip, LossKind::Frame, LossKind::Total, LossKind::Infonce];

    pub fn evaluate(self, batch: &EmbeddingBatch, params: &LossParams) -> Result<LossOutput> {
        match self {
            LossKind::Clip => clip_sigmoid_loss(batch, params),
            LossKind::Frame => frame_sigmoid_loss(batch, params),
            LossKind::Total => total_loss(batch, params),
            LossKind::Infonce => infonce_loss(batch, params),
        }
    }

    /// Loss value alone; bit-identical to `evaluate(..).value`.
    pub fn value(self, batch: &EmbeddingBatch, params: &LossParams) -> Result<f64> {
        match self {
            LossKind::Clip => clip_sigmoid_value(batch, params),
            LossKind::Frame => frame_sigmoid_value(batch, params),
            LossKind::Total => Ok(clip_sigmoid_value(batch, params)? + frame_sigmoid_value(batch, params)?),
            LossKind::Infonce => infonce_value(batch, params),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(LossKind::Clip),
            "frame" => Ok(LossKind::Frame),
            "total" => Ok(LossKind::Total),
            "infonce" => Ok(LossKind::Infonce),
            other => Err(Error::InvalidParam(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Rows scaled to unit length, with their original norms.
pub(crate) fn normalize_rows(x: ArrayView2<f64>, what: &'static str) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut unit = x.to_owned();
    let mut norms = Array1::zeros(x.nrows());
    for (row, (mut u, n)) in unit.axis_iter_mut(Axis(0)).zip(norms.iter_mut()).enumerate() {
        let len = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(len > 0.0) {
            return Err(Error::ZeroNorm { what, row });
        }
        u /= len;
        *n = len;
    }
    Ok((unit, norms))
}

pub(crate) fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Pairwise cosine similarities of the rows of `x` (m×d) and `w` (n×d).
pub fn cosine_matrix(x: ArrayView2<f64>, w: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "row dimensions {} and {} differ",
            x.ncols(),
            w.ncols()
        )));
    }
    let (xu, _) = normalize_rows(x, "left operand")?;
    let (wu, _) = normalize_rows(w, "right operand")?;
    let mut s = Array2::zeros((x.nrows(), w.nrows()));
    for i in 0..x.nrows() {
        for j in 0..w.nrows() {
            s[[i, j]] = dot(xu.row(i), wu.row(j)).clamp(-1.0, 1.0);
        }
    }
    Ok(s)
}

/// `log(1 + e^u)` without overflow.
pub(crate) fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    #[allow(clippy::approx_constant)] // printed reference value
    fn cosine_cases() {
        let eye = Array2::<f64>::eye(3);
        assert_eq!(cosine_matrix(eye.view(), eye.view()).unwrap(), eye);

        let x = array![[1.0, 2.0, -1.0], [0.5, 0.1, 3.0]];
        let mut scaled = x.clone();
        scaled.row_mut(1).mapv_inplace(|v| v * 5.0);
        let a = cosine_matrix(x.view(), x.view()).unwrap();
        let b = cosine_matrix(scaled.view(), x.view()).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() < 1e-15));

        let s = cosine_matrix(array![[1.0, 0.0]].view(), array![[1.0, 1.0]].view()).unwrap();
        assert!((s[[0, 0]] - 0.70711).abs() < 1e-5);
        assert!((s[[0, 0]] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn cosine_zero_row_is_named() {
        let x = array![[1.0, 0.0], [0.0, 0.0]];
        match cosine_matrix(x.view(), x.view()) {
            Err(Error::ZeroNorm { row: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) == 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn batch_validation() {
        let g = Array2::<f64>::eye(2);
        assert!(EmbeddingBatch::clip_only(g.clone(), Array2::eye(3)).is_err());
        let b = EmbeddingBatch::clip_only(g.clone(), g.clone()).unwrap();
        assert!(b.clone().with_matches(Array2::from_elem((2, 2), 2)).is_err());
        assert!(b.with_annotated(vec![true]).is_err());
        let frames = Array3::<f64>::ones((2, 3, 2));
        let phrases = Array3::<f64>::ones((2, 1, 2));
        assert!(EmbeddingBatch::new(g.clone(), g.clone(), frames.clone(), phrases.clone(), Array3::zeros((2, 1, 3))).is_ok());
        assert!(EmbeddingBatch::new(g.clone(), g.clone(), frames, phrases, Array3::zeros((2, 2, 3))).is_err());
    }
}
