use ndarray::{Array1, Array2};

use super::{dot, normalize_rows, EmbeddingBatch, Gradients, LossOutput, LossParams};
use crate::error::{Error, Result};

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct Forward {
    gu: Array2<f64>,
    gn: Array1<f64>,
    tu: Array2<f64>,
    tn: Array1<f64>,
    sim: Array2<f64>,
    logits: Array2<f64>,
    row_lse: Vec<f64>,
    col_lse: Vec<f64>,
    value: f64,
}

fn forward(batch: &EmbeddingBatch, params: &LossParams) -> Result<Forward> {
    batch.validate()?;
    params.validate()?;
    let bsz = batch.batch_size();
    let t = params.t;
    let (gu, gn) = normalize_rows(batch.global_audio.view(), "global_audio")?;
    let (tu, tn) = normalize_rows(batch.captions.view(), "captions")?;

    let mut sim = Array2::zeros((bsz, bsz));
    for i in 0..bsz {
        for j in 0..bsz {
            sim[[i, j]] = dot(gu.row(i), tu.row(j));
        }
    }
    let logits = sim.mapv(|s| t * s);
    let row_lse: Vec<f64> = (0..bsz).map(|i| log_sum_exp(logits.row(i).iter().copied())).collect();
    let col_lse: Vec<f64> = (0..bsz).map(|j| log_sum_exp(logits.column(j).iter().copied())).collect();

    let mut total = 0.0;
    for i in 0..bsz {
        total += (logits[[i, i]] - row_lse[i]) + (logits[[i, i]] - col_lse[i]);
    }
    let value = -total * (1.0 / (2.0 * bsz as f64));
    if !value.is_finite() {
        return Err(Error::NonFinite("infonce logits".into()));
    }
    Ok(Forward {
        gu,
        gn,
        tu,
        tn,
        sim,
        logits,
        row_lse,
        col_lse,
        value,
    })
}

/// Value of [`infonce_loss`] without gradients.
pub fn infonce_value(batch: &EmbeddingBatch, params: &LossParams) -> Result<f64> {
    Ok(forward(batch, params)?.value)
}

/// Symmetric InfoNCE over logits `t·s_ij` with diagonal positives:
/// `−1/(2B) Σ_i [log softmax_row_i(i) + log softmax_col_i(i)]`.
/// Uses the clip-level temperature `params.t`; the bias is unused.
pub fn infonce_loss(batch: &EmbeddingBatch, params: &LossParams) -> Result<LossOutput> {
    let Forward {
        gu,
        gn,
        tu,
        tn,
        sim,
        logits,
        row_lse,
        col_lse,
        value,
    } = forward(batch, params)?;
    let bsz = batch.batch_size();
    let t = params.t;
    let scale = 1.0 / (2.0 * bsz as f64);

    // dL/dlogit_ab = scale · [(p_row_a(b) − δ_ab) + (p_col_b(a) − δ_ab)]
    let mut grads = Gradients::zeros_like(batch);
    let mut d_sim = Array2::zeros((bsz, bsz));
    for a in 0..bsz {
        for b in 0..bsz {
            let delta = if a == b { 1.0 } else { 0.0 };
            let l = logits[[a, b]];
            let d_logit = scale * (((l - row_lse[a]).exp() - delta) + ((l - col_lse[b]).exp() - delta));
            grads.t += d_logit * sim[[a, b]];
            d_sim[[a, b]] = d_logit * t;
        }
    }
    let d = batch.dim();
    for i in 0..bsz {
        for j in 0..bsz {
            let g = d_sim[[i, j]];
            let s = sim[[i, j]];
            for k in 0..d {
                grads.global_audio[[i, k]] += g * (tu[[j, k]] - s * gu[[i, k]]) / gn[i];
                grads.captions[[j, k]] += g * (gu[[i, k]] - s * tu[[j, k]]) / tn[j];
            }
        }
    }
    Ok(LossOutput { value, grads })
}
