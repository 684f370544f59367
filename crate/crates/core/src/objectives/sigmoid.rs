use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

use super::{dot, normalize_rows, sigmoid, softplus, EmbeddingBatch, Gradients, LossOutput, LossParams, SignConvention};
use crate::error::{Error, Result};

/// Pair term `softplus(u)` and the partials of `u` w.r.t. (s, t, b).
#[derive(Debug, Clone, Copy)]
struct PairTerm {
    u: f64,
    du_ds: f64,
    du_dt: f64,
    du_db: f64,
}

fn pair_term(positive: bool, s: f64, t: f64, b: f64, convention: SignConvention) -> PairTerm {
    let z = if positive { 1.0 } else { -1.0 };
    match convention {
        SignConvention::AsPrinted => PairTerm {
            u: z * (-t * s + b),
            du_ds: -z * t,
            du_dt: -z * s,
            du_db: z,
        },
        SignConvention::Siglip => PairTerm {
            u: -z * (t * s + b),
            du_ds: -z * t,
            du_dt: -z * s,
            du_db: -z,
        },
    }
}

/// Sum of pair terms over an `m×n` similarity block, with `dL/ds` per pair and the
/// scalar-parameter gradients, both already multiplied by `scale`.
struct BlockResult {
    sum: f64,
    d_sim: Array2<f64>,
    dt: f64,
    db: f64,
}

fn sigmoid_block(
    sim: &Array2<f64>,
    positive: impl Fn(usize, usize) -> bool,
    t: f64,
    b: f64,
    convention: SignConvention,
    scale: f64,
    what: &str,
) -> Result<BlockResult> {
    let (m, n) = sim.dim();
    let mut d_sim = Array2::zeros((m, n));
    let (mut sum, mut dt, mut db) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in 0..n {
            let term = pair_term(positive(i, j), sim[[i, j]], t, b, convention);
            let value = softplus(term.u);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("{what} pair ({i}, {j})")));
            }
            sum += value;
            let g = sigmoid(term.u) * scale;
            d_sim[[i, j]] = g * term.du_ds;
            dt += g * term.du_dt;
            db += g * term.du_db;
        }
    }
    Ok(BlockResult { sum, d_sim, dt, db })
}

/// Same sum as [`sigmoid_block`] in the same order, without the partials.
fn block_sum(
    sim: &Array2<f64>,
    positive: impl Fn(usize, usize) -> bool,
    t: f64,
    b: f64,
    convention: SignConvention,
    what: &str,
) -> Result<f64> {
    let (m, n) = sim.dim();
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..n {
            let value = softplus(pair_term(positive(i, j), sim[[i, j]], t, b, convention).u);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("{what} pair ({i}, {j})")));
            }
            sum += value;
        }
    }
    Ok(sum)
}

/// Back-propagates `dL/ds_ij` through cosine similarity of unit rows `xu`, `wu`
/// with original norms `xn`, `wn`, accumulating into `dx`, `dw`.
#[allow(clippy::too_many_arguments)]
fn cosine_backward(
    d_sim: &Array2<f64>,
    sim: &Array2<f64>,
    xu: ArrayView2<f64>,
    xn: &[f64],
    wu: ArrayView2<f64>,
    wn: &[f64],
    mut dx: ArrayViewMut2<f64>,
    mut dw: ArrayViewMut2<f64>,
) {
    let d = xu.ncols();
    for i in 0..xu.nrows() {
        for j in 0..wu.nrows() {
            let g = d_sim[[i, j]];
            if g == 0.0 {
                continue;
            }
            let s = sim[[i, j]];
            for k in 0..d {
                dx[[i, k]] += g * (wu[[j, k]] - s * xu[[i, k]]) / xn[i];
                dw[[j, k]] += g * (xu[[i, k]] - s * wu[[j, k]]) / wn[j];
            }
        }
    }
}

fn similarities(xu: ArrayView2<f64>, wu: ArrayView2<f64>) -> Array2<f64> {
    let mut s = Array2::zeros((xu.nrows(), wu.nrows()));
    for i in 0..xu.nrows() {
        for j in 0..wu.nrows() {
            s[[i, j]] = dot(xu.row(i), wu.row(j));
        }
    }
    s
}

/// Mean over all `B²` audio-caption pairs of `log(1 + exp(z_ij·(−t·s_ij + b)))`,
/// summed over pairs and divided by `B`.
pub fn clip_sigmoid_loss(batch: &EmbeddingBatch, params: &LossParams) -> Result<LossOutput> {
    batch.validate()?;
    params.validate()?;
    let bsz = batch.batch_size();
    let (gu, gn) = normalize_rows(batch.global_audio.view(), "global_audio")?;
    let (tu, tn) = normalize_rows(batch.captions.view(), "captions")?;
    let sim = similarities(gu.view(), tu.view());
    let scale = 1.0 / bsz as f64;
    let block = sigmoid_block(
        &sim,
        |i, j| batch.matches[[i, j]] == 1,
        params.t,
        params.b,
        params.convention,
        scale,
        "clip",
    )?;

    let mut grads = Gradients::zeros_like(batch);
    cosine_backward(
        &block.d_sim,
        &sim,
        gu.view(),
        gn.as_slice().expect("contiguous"),
        tu.view(),
        tn.as_slice().expect("contiguous"),
        grads.global_audio.view_mut(),
        grads.captions.view_mut(),
    );
    grads.t = block.dt;
    grads.b = block.db;
    Ok(LossOutput {
        value: block.sum * scale,
        grads,
    })
}

/// Value of [`clip_sigmoid_loss`] without gradients.
pub fn clip_sigmoid_value(batch: &EmbeddingBatch, params: &LossParams) -> Result<f64> {
    batch.validate()?;
    params.validate()?;
    let (gu, _) = normalize_rows(batch.global_audio.view(), "global_audio")?;
    let (tu, _) = normalize_rows(batch.captions.view(), "captions")?;
    let sim = similarities(gu.view(), tu.view());
    let sum = block_sum(&sim, |i, j| batch.matches[[i, j]] == 1, params.t, params.b, params.convention, "clip")?;
    Ok(sum * (1.0 / batch.batch_size() as f64))
}

/// Mean over annotated clips, phrases and frames of
/// `log(1 + exp(z_ikl·(−t'·s_ikl + b')))` where `s_ikl` is the cosine of frame `l`
/// and phrase `k` of clip `i`. Zero when no clip is annotated.
pub fn frame_sigmoid_loss(batch: &EmbeddingBatch, params: &LossParams) -> Result<LossOutput> {
    batch.validate()?;
    params.validate()?;
    let n = batch.phrase_count();
    let l = batch.frame_count();
    let annotated: Vec<usize> = (0..batch.batch_size()).filter(|&i| batch.annotated[i]).collect();
    let mut grads = Gradients::zeros_like(batch);
    let count = annotated.len() * n * l;
    if count == 0 {
        return Ok(LossOutput { value: 0.0, grads });
    }
    let scale = 1.0 / count as f64;
    let mut total = 0.0;
    for &i in &annotated {
        // zero-norm rows are reported by their index in the flattened (B·L)×d or (B·N)×d matrix
        let (fu, fnorm) = normalize_rows(batch.frames.index_axis(Axis(0), i), "frames")
            .map_err(|e| offset_row(e, i * l))?;
        let (pu, pnorm) = normalize_rows(batch.phrases.index_axis(Axis(0), i), "phrases")
            .map_err(|e| offset_row(e, i * n))?;
        // similarity block indexed [phrase k, frame l]
        let sim = similarities(pu.view(), fu.view());
        let block = sigmoid_block(
            &sim,
            |k, fr| batch.labels[[i, k, fr]] == 1,
            params.t_frame,
            params.b_frame,
            params.convention,
            scale,
            "frame",
        )?;
        total += block.sum;
        grads.t_frame += block.dt;
        grads.b_frame += block.db;
        cosine_backward(
            &block.d_sim,
            &sim,
            pu.view(),
            pnorm.as_slice().expect("contiguous"),
            fu.view(),
            fnorm.as_slice().expect("contiguous"),
            grads.phrases.index_axis_mut(Axis(0), i),
            grads.frames.index_axis_mut(Axis(0), i),
        );
    }
    Ok(LossOutput {
        value: total * scale,
        grads,
    })
}

/// Value of [`frame_sigmoid_loss`] without gradients.
pub fn frame_sigmoid_value(batch: &EmbeddingBatch, params: &LossParams) -> Result<f64> {
    batch.validate()?;
    params.validate()?;
    let n = batch.phrase_count();
    let l = batch.frame_count();
    let annotated: Vec<usize> = (0..batch.batch_size()).filter(|&i| batch.annotated[i]).collect();
    let count = annotated.len() * n * l;
    if count == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &i in &annotated {
        let (fu, _) = normalize_rows(batch.frames.index_axis(Axis(0), i), "frames").map_err(|e| offset_row(e, i * l))?;
        let (pu, _) = normalize_rows(batch.phrases.index_axis(Axis(0), i), "phrases").map_err(|e| offset_row(e, i * n))?;
        let sim = similarities(pu.view(), fu.view());
        total += block_sum(
            &sim,
            |k, fr| batch.labels[[i, k, fr]] == 1,
            params.t_frame,
            params.b_frame,
            params.convention,
            "frame",
        )?;
    }
    Ok(total * (1.0 / count as f64))
}

fn offset_row(e: Error, offset: usize) -> Error {
    match e {
        Error::ZeroNorm { what, row } => Error::ZeroNorm {
            what,
            row: offset + row,
        },
        other => other,
    }
}

/// Sum of the clip- and frame-level losses.
pub fn total_loss(batch: &EmbeddingBatch, params: &LossParams) -> Result<LossOutput> {
    let clip = clip_sigmoid_loss(batch, params)?;
    let frame = frame_sigmoid_loss(batch, params)?;
    let mut grads = clip.grads;
    grads.add_assign(&frame.grads);
    Ok(LossOutput {
        value: clip.value + frame.value,
        grads,
    })
}
