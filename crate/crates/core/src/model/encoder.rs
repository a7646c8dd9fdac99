//! Per-row encoder forward pass with cached activations and the matching
//! manual backward pass.
//!
//! Rows are processed independently at their true length; `[PAD]` positions
//! are excluded from the attention set and from every per-position
//! computation, which makes padding invariance exact rather than
//! approximate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{
    affine, affine_backward, dot, gelu, gelu_grad, softmax, softmax_backward, Matrix,
};
use super::{LayerParams, ModelParams};
use crate::dataset::{EncodedInstance, PAD_ID};
use crate::error::{Error, Result};
use crate::exec;

const LN_EPS: f64 = 1e-5;

pub(super) struct LnCache {
    normed: Vec<f64>,
    rstd: f64,
}

fn layer_norm(x: &[f64], gain: &Matrix, bias: &Matrix) -> (Vec<f64>, LnCache) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    let normed: Vec<f64> = x.iter().map(|v| (v - mean) * rstd).collect();
    let out: Vec<f64> = normed
        .iter()
        .enumerate()
        .map(|(i, v)| v * gain.data[i] + bias.data[i])
        .collect();
    (out, LnCache { normed, rstd })
}

fn layer_norm_backward(
    cache: &LnCache,
    gain: &Matrix,
    dy: &[f64],
    dgain: &mut Matrix,
    dbias: &mut Matrix,
) -> Vec<f64> {
    let n = dy.len() as f64;
    let mut dnormed = vec![0.0; dy.len()];
    let mut mean_dnormed = 0.0;
    let mut mean_dnormed_normed = 0.0;
    for i in 0..dy.len() {
        dgain.data[i] += dy[i] * cache.normed[i];
        dbias.data[i] += dy[i];
        dnormed[i] = dy[i] * gain.data[i];
        mean_dnormed += dnormed[i];
        mean_dnormed_normed += dnormed[i] * cache.normed[i];
    }
    mean_dnormed /= n;
    mean_dnormed_normed /= n;
    (0..dy.len())
        .map(|i| cache.rstd * (dnormed[i] - mean_dnormed - cache.normed[i] * mean_dnormed_normed))
        .collect()
}

/// Inverted-dropout context for one row during training.
pub(super) struct RowDropout<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub p: f64,
}

// Draws a factor matrix (0 or 1/(1-p)) and scales `x` in place over the
// attended positions.
fn apply_dropout(
    x: &mut Matrix,
    attend: &[usize],
    ctx: &mut Option<RowDropout<'_>>,
) -> Option<Matrix> {
    let Some(RowDropout { rng, p }) = ctx.as_mut() else {
        return None;
    };
    if *p == 0.0 {
        return None;
    }
    let keep = 1.0 - *p;
    let mut factors = Matrix::zeros(x.rows, x.cols);
    for &t in attend {
        for j in 0..x.cols {
            let f = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
            factors.data[t * x.cols + j] = f;
            x.data[t * x.cols + j] *= f;
        }
    }
    Some(factors)
}

fn mul_factors(d: &mut Matrix, factors: &Option<Matrix>) {
    if let Some(f) = factors {
        for (a, b) in d.data.iter_mut().zip(&f.data) {
            *a *= b;
        }
    }
}

pub(super) struct LayerTrace {
    h_in: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
    ctx: Matrix,
    attn_drop: Option<Matrix>,
    ln1: Vec<Option<LnCache>>,
    h_mid: Matrix,
    ff_pre: Matrix,
    ff_act: Matrix,
    ff_drop: Option<Matrix>,
    ln2: Vec<Option<LnCache>>,
    h_out: Matrix,
}

pub(super) struct RowTrace {
    ids: Vec<u32>,
    segs: Vec<u8>,
    attend: Vec<usize>,
    emb_ln: Vec<Option<LnCache>>,
    emb_drop: Option<Matrix>,
    h0: Matrix,
    layers: Vec<LayerTrace>,
}

impl RowTrace {
    pub fn final_hidden(&self) -> &Matrix {
        self.layers
            .last()
            .map(|l| &l.h_out)
            .unwrap_or(&self.h0)
    }

    pub fn h_cls(&self) -> &[f64] {
        self.final_hidden().row(0)
    }
}

fn validate_row(params: &ModelParams, inst: &EncodedInstance) -> Result<()> {
    if inst.token_ids.len() != inst.segment_ids.len() {
        return Err(Error::invalid("batch", "token/segment length mismatch"));
    }
    if inst.token_ids.is_empty() {
        return Err(Error::invalid("batch", "empty instance"));
    }
    if inst.token_ids.len() > params.config.max_len {
        return Err(Error::invalid(
            "batch",
            format!(
                "sequence length {} exceeds max_len {}",
                inst.token_ids.len(),
                params.config.max_len
            ),
        ));
    }
    for &id in &inst.token_ids {
        if id as usize >= params.config.vocab_size {
            return Err(Error::invalid(
                "batch",
                format!("token id {id} out of range for vocab {}", params.config.vocab_size),
            ));
        }
    }
    Ok(())
}

pub(super) fn forward_row(
    params: &ModelParams,
    inst: &EncodedInstance,
    mut dropout: Option<RowDropout<'_>>,
) -> RowTrace {
    let h = params.config.hidden;
    let n = inst.token_ids.len();
    let attend: Vec<usize> = (0..n).filter(|&t| inst.token_ids[t] != PAD_ID).collect();

    let mut emb_sum = Matrix::zeros(n, h);
    for &t in &attend {
        let tok = params.tok_emb.row(inst.token_ids[t] as usize);
        let pos = params.pos_emb.row(t);
        let seg = params.seg_emb.row(inst.segment_ids[t] as usize);
        let row = emb_sum.row_mut(t);
        for j in 0..h {
            row[j] = tok[j] + pos[j] + seg[j];
        }
    }

    let mut h0 = Matrix::zeros(n, h);
    let mut emb_ln: Vec<Option<LnCache>> = (0..n).map(|_| None).collect();
    for &t in &attend {
        let (out, cache) = layer_norm(emb_sum.row(t), &params.emb_ln_gain, &params.emb_ln_bias);
        h0.row_mut(t).copy_from_slice(&out);
        emb_ln[t] = Some(cache);
    }
    let emb_drop = apply_dropout(&mut h0, &attend, &mut dropout);

    let mut layers = Vec::with_capacity(params.layers.len());
    let mut h_prev = h0.clone();
    for layer in &params.layers {
        let trace = forward_layer(params, layer, &h_prev, &attend, &mut dropout);
        h_prev = trace.h_out.clone();
        layers.push(trace);
    }

    RowTrace {
        ids: inst.token_ids.clone(),
        segs: inst.segment_ids.clone(),
        attend,
        emb_ln,
        emb_drop,
        h0,
        layers,
    }
}

fn forward_layer(
    params: &ModelParams,
    layer: &LayerParams,
    h_in: &Matrix,
    attend: &[usize],
    dropout: &mut Option<RowDropout<'_>>,
) -> LayerTrace {
    let h = params.config.hidden;
    let heads = params.config.heads;
    let d = params.config.head_dim();
    let n = h_in.rows;
    let scale = 1.0 / (d as f64).sqrt();

    let mut q = Matrix::zeros(n, h);
    let mut k = Matrix::zeros(n, h);
    let mut v = Matrix::zeros(n, h);
    for &t in attend {
        q.row_mut(t)
            .copy_from_slice(&affine(&layer.attn_q_w, &layer.attn_q_b, h_in.row(t)));
        k.row_mut(t)
            .copy_from_slice(&affine(&layer.attn_k_w, &layer.attn_k_b, h_in.row(t)));
        v.row_mut(t)
            .copy_from_slice(&affine(&layer.attn_v_w, &layer.attn_v_b, h_in.row(t)));
    }

    let mut probs: Vec<Matrix> = (0..heads).map(|_| Matrix::zeros(n, n)).collect();
    let mut ctx = Matrix::zeros(n, h);
    for a in 0..heads {
        let off = a * d;
        for &t in attend {
            let mut scores: Vec<f64> = attend
                .iter()
                .map(|&u| dot(&q.row(t)[off..off + d], &k.row(u)[off..off + d]) * scale)
                .collect();
            softmax(&mut scores);
            for (idx, &u) in attend.iter().enumerate() {
                probs[a].data[t * n + u] = scores[idx];
                let vr = &v.row(u)[off..off + d];
                let cr = &mut ctx.row_mut(t)[off..off + d];
                for j in 0..d {
                    cr[j] += scores[idx] * vr[j];
                }
            }
        }
    }

    let mut attn_out = Matrix::zeros(n, h);
    for &t in attend {
        attn_out
            .row_mut(t)
            .copy_from_slice(&affine(&layer.attn_out_w, &layer.attn_out_b, ctx.row(t)));
    }
    let attn_drop = apply_dropout(&mut attn_out, attend, dropout);

    let mut h_mid = Matrix::zeros(n, h);
    let mut ln1: Vec<Option<LnCache>> = (0..n).map(|_| None).collect();
    for &t in attend {
        let r1: Vec<f64> = h_in
            .row(t)
            .iter()
            .zip(attn_out.row(t))
            .map(|(a, b)| a + b)
            .collect();
        let (out, cache) = layer_norm(&r1, &layer.ln1_gain, &layer.ln1_bias);
        h_mid.row_mut(t).copy_from_slice(&out);
        ln1[t] = Some(cache);
    }

    let f = params.config.ff_dim;
    let mut ff_pre = Matrix::zeros(n, f);
    let mut ff_act = Matrix::zeros(n, f);
    let mut ff_out = Matrix::zeros(n, h);
    for &t in attend {
        let pre = affine(&layer.ff_in_w, &layer.ff_in_b, h_mid.row(t));
        let act: Vec<f64> = pre.iter().map(|&x| gelu(x)).collect();
        ff_out
            .row_mut(t)
            .copy_from_slice(&affine(&layer.ff_out_w, &layer.ff_out_b, &act));
        ff_pre.row_mut(t).copy_from_slice(&pre);
        ff_act.row_mut(t).copy_from_slice(&act);
    }
    let ff_drop = apply_dropout(&mut ff_out, attend, dropout);

    let mut h_out = Matrix::zeros(n, h);
    let mut ln2: Vec<Option<LnCache>> = (0..n).map(|_| None).collect();
    for &t in attend {
        let r2: Vec<f64> = h_mid
            .row(t)
            .iter()
            .zip(ff_out.row(t))
            .map(|(a, b)| a + b)
            .collect();
        let (out, cache) = layer_norm(&r2, &layer.ln2_gain, &layer.ln2_bias);
        h_out.row_mut(t).copy_from_slice(&out);
        ln2[t] = Some(cache);
    }

    LayerTrace {
        h_in: h_in.clone(),
        q,
        k,
        v,
        probs,
        ctx,
        attn_drop,
        ln1,
        h_mid,
        ff_pre,
        ff_act,
        ff_drop,
        ln2,
        h_out,
    }
}

/// Backpropagate `d_hcls` (gradient at the final-layer `[CLS]` state)
/// through the whole encoder, accumulating into `grads`.
pub(super) fn backward_row(
    params: &ModelParams,
    trace: &RowTrace,
    d_hcls: &[f64],
    grads: &mut ModelParams,
) {
    let h = params.config.hidden;
    let n = trace.ids.len();

    let mut dh = Matrix::zeros(n, h);
    dh.row_mut(0).copy_from_slice(d_hcls);

    for (layer_idx, layer_trace) in trace.layers.iter().enumerate().rev() {
        dh = backward_layer(
            params,
            &params.layers[layer_idx],
            layer_trace,
            &trace.attend,
            dh,
            &mut grads.layers[layer_idx],
        );
    }

    // embedding block: h0 = dropout(LN(emb_sum))
    mul_factors(&mut dh, &trace.emb_drop);
    for &t in &trace.attend {
        let cache = trace.emb_ln[t].as_ref().expect("attended position has cache");
        let dsum = layer_norm_backward(
            cache,
            &params.emb_ln_gain,
            dh.row(t),
            &mut grads.emb_ln_gain,
            &mut grads.emb_ln_bias,
        );
        let tok = grads.tok_emb.row_mut(trace.ids[t] as usize);
        for j in 0..h {
            tok[j] += dsum[j];
        }
        let pos = grads.pos_emb.row_mut(t);
        for j in 0..h {
            pos[j] += dsum[j];
        }
        let seg = grads.seg_emb.row_mut(trace.segs[t] as usize);
        for j in 0..h {
            seg[j] += dsum[j];
        }
    }
}

fn backward_layer(
    params: &ModelParams,
    layer: &LayerParams,
    trace: &LayerTrace,
    attend: &[usize],
    dh_out: Matrix,
    grads: &mut LayerParams,
) -> Matrix {
    let h = params.config.hidden;
    let heads = params.config.heads;
    let d = params.config.head_dim();
    let n = dh_out.rows;
    let scale = 1.0 / (d as f64).sqrt();

    // ln2 -> residual (h_mid + ff_out)
    let mut dh_mid = Matrix::zeros(n, h);
    let mut dff_out = Matrix::zeros(n, h);
    for &t in attend {
        let cache = trace.ln2[t].as_ref().unwrap();
        let dr2 = layer_norm_backward(
            cache,
            &layer.ln2_gain,
            dh_out.row(t),
            &mut grads.ln2_gain,
            &mut grads.ln2_bias,
        );
        dh_mid.row_mut(t).copy_from_slice(&dr2);
        dff_out.row_mut(t).copy_from_slice(&dr2);
    }
    mul_factors(&mut dff_out, &trace.ff_drop);

    // feed-forward
    for &t in attend {
        let dact = affine_backward(
            &layer.ff_out_w,
            &mut grads.ff_out_w,
            &mut grads.ff_out_b,
            trace.ff_act.row(t),
            dff_out.row(t),
        );
        let dpre: Vec<f64> = dact
            .iter()
            .zip(trace.ff_pre.row(t))
            .map(|(&g, &x)| g * gelu_grad(x))
            .collect();
        let dmid = affine_backward(
            &layer.ff_in_w,
            &mut grads.ff_in_w,
            &mut grads.ff_in_b,
            trace.h_mid.row(t),
            &dpre,
        );
        let row = dh_mid.row_mut(t);
        for j in 0..h {
            row[j] += dmid[j];
        }
    }

    // ln1 -> residual (h_in + attn_out)
    let mut dh_in = Matrix::zeros(n, h);
    let mut dattn_out = Matrix::zeros(n, h);
    for &t in attend {
        let cache = trace.ln1[t].as_ref().unwrap();
        let dr1 = layer_norm_backward(
            cache,
            &layer.ln1_gain,
            dh_mid.row(t),
            &mut grads.ln1_gain,
            &mut grads.ln1_bias,
        );
        dh_in.row_mut(t).copy_from_slice(&dr1);
        dattn_out.row_mut(t).copy_from_slice(&dr1);
    }
    mul_factors(&mut dattn_out, &trace.attn_drop);

    // output projection
    let mut dctx = Matrix::zeros(n, h);
    for &t in attend {
        let dc = affine_backward(
            &layer.attn_out_w,
            &mut grads.attn_out_w,
            &mut grads.attn_out_b,
            trace.ctx.row(t),
            dattn_out.row(t),
        );
        dctx.row_mut(t).copy_from_slice(&dc);
    }

    // attention
    let mut dq = Matrix::zeros(n, h);
    let mut dk = Matrix::zeros(n, h);
    let mut dv = Matrix::zeros(n, h);
    for a in 0..heads {
        let off = a * d;
        for &t in attend {
            let dprobs: Vec<f64> = attend
                .iter()
                .map(|&u| dot(&dctx.row(t)[off..off + d], &trace.v.row(u)[off..off + d]))
                .collect();
            let p_row: Vec<f64> = attend.iter().map(|&u| trace.probs[a].get(t, u)).collect();
            for (idx, &u) in attend.iter().enumerate() {
                let dc = &dctx.row(t)[off..off + d];
                let dvr = &mut dv.row_mut(u)[off..off + d];
                for j in 0..d {
                    dvr[j] += p_row[idx] * dc[j];
                }
            }
            let dscores = softmax_backward(&p_row, &dprobs);
            for (idx, &u) in attend.iter().enumerate() {
                let g = dscores[idx] * scale;
                let kr = &trace.k.row(u)[off..off + d];
                let qr = &trace.q.row(t)[off..off + d];
                let dqr = &mut dq.row_mut(t)[off..off + d];
                for j in 0..d {
                    dqr[j] += g * kr[j];
                }
                let dkr = &mut dk.row_mut(u)[off..off + d];
                for j in 0..d {
                    dkr[j] += g * qr[j];
                }
            }
        }
    }

    for &t in attend {
        let dx_q = affine_backward(
            &layer.attn_q_w,
            &mut grads.attn_q_w,
            &mut grads.attn_q_b,
            trace.h_in.row(t),
            dq.row(t),
        );
        let dx_k = affine_backward(
            &layer.attn_k_w,
            &mut grads.attn_k_w,
            &mut grads.attn_k_b,
            trace.h_in.row(t),
            dk.row(t),
        );
        let dx_v = affine_backward(
            &layer.attn_v_w,
            &mut grads.attn_v_w,
            &mut grads.attn_v_b,
            trace.h_in.row(t),
            dv.row(t),
        );
        let row = dh_in.row_mut(t);
        for j in 0..h {
            row[j] += dx_q[j] + dx_k[j] + dx_v[j];
        }
    }

    dh_in
}

/// Final-layer states for a batch, in input order.
pub struct BatchOutput {
    /// One row per instance: the final-layer state at position 0.
    pub h_cls: Matrix,
    /// Final-layer hidden states per instance (positions × hidden).
    pub hidden: Vec<Matrix>,
}

fn batch_output(params: &ModelParams, rows: Vec<RowTrace>) -> BatchOutput {
    let h = params.config.hidden;
    let mut h_cls = Matrix::zeros(rows.len(), h);
    let mut hidden = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        h_cls.row_mut(i).copy_from_slice(row.h_cls());
        hidden.push(row.final_hidden().clone());
    }
    BatchOutput { h_cls, hidden }
}

/// Deterministic eval-mode forward over a batch.
pub fn forward_batch(params: &ModelParams, batch: &[EncodedInstance]) -> Result<BatchOutput> {
    for inst in batch {
        validate_row(params, inst)?;
    }
    let rows = exec::map_slice(batch, |inst| forward_row(params, inst, None));
    Ok(batch_output(params, rows))
}

/// Sequential twin of [`forward_batch`].
pub fn forward_batch_seq(params: &ModelParams, batch: &[EncodedInstance]) -> Result<BatchOutput> {
    for inst in batch {
        validate_row(params, inst)?;
    }
    let rows = exec::map_slice_seq(batch, |inst| forward_row(params, inst, None));
    Ok(batch_output(params, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig, MIN_MAX_LEN};

    fn tiny_params() -> ModelParams {
        let config = ModelConfig {
            layers: 2,
            hidden: 8,
            heads: 2,
            ff_dim: 16,
            max_len: MIN_MAX_LEN,
            vocab_size: 20,
            label_count: 5,
            dropout: 0.0,
        };
        init_model(&config, 11).unwrap()
    }

    fn inst(ids: Vec<u32>) -> EncodedInstance {
        let segs = vec![0; ids.len()];
        EncodedInstance {
            token_ids: ids,
            segment_ids: segs,
            label_id: 0,
            adversarial: false,
        }
    }

    #[test]
    fn batch_of_one_equals_row_in_larger_batch() {
        let params = tiny_params();
        let a = inst(vec![2, 7, 9, 11, 3]);
        let batch: Vec<EncodedInstance> = (0..8)
            .map(|i| inst(vec![2, 6 + i, 9, 3]))
            .chain([a.clone()])
            .collect();
        let single = forward_batch(&params, &[a]).unwrap();
        let many = forward_batch(&params, &batch).unwrap();
        for j in 0..params.config.hidden {
            assert!((single.h_cls.get(0, j) - many.h_cls.get(8, j)).abs() < 1e-6);
        }
    }

    #[test]
    fn permuting_batch_permutes_outputs() {
        let params = tiny_params();
        let batch = vec![inst(vec![2, 7, 3]), inst(vec![2, 9, 10, 3]), inst(vec![2, 12, 3])];
        let fwd = forward_batch(&params, &batch).unwrap();
        let permuted = vec![batch[2].clone(), batch[0].clone(), batch[1].clone()];
        let fwd_p = forward_batch(&params, &permuted).unwrap();
        assert_eq!(fwd.h_cls.row(0), fwd_p.h_cls.row(1));
        assert_eq!(fwd.h_cls.row(2), fwd_p.h_cls.row(0));
    }

    #[test]
    fn all_pad_tail_does_not_change_h_cls() {
        let params = tiny_params();
        let bare = inst(vec![2, 7, 9, 3]);
        let mut padded = bare.clone();
        padded.token_ids.extend([PAD_ID; 6]);
        padded.segment_ids.extend([1; 6]);
        let a = forward_batch(&params, &[bare]).unwrap();
        let b = forward_batch(&params, &[padded]).unwrap();
        assert_eq!(a.h_cls.row(0), b.h_cls.row(0));
    }

    #[test]
    fn out_of_range_token_is_an_error() {
        let params = tiny_params();
        assert!(forward_batch(&params, &[inst(vec![2, 25, 3])]).is_err());
    }

    #[test]
    fn parallel_and_sequential_forward_agree() {
        let params = tiny_params();
        let batch: Vec<EncodedInstance> =
            (0..10).map(|i| inst(vec![2, 4 + i, 9, 3])).collect();
        let a = forward_batch(&params, &batch).unwrap();
        let b = forward_batch_seq(&params, &batch).unwrap();
        assert_eq!(a.h_cls, b.h_cls);
    }
}
