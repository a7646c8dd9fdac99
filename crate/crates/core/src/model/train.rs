//! Losses, Adam training loops for pre-training and fine-tuning, and
//! prediction/export entry points.
//!
//! Batch gradients are accumulated over fixed-size row chunks whose
//! boundaries depend only on the batch length, so the floating-point
//! summation tree — and therefore every checkpoint byte — is identical
//! across worker counts and with the `parallel` feature off.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{backward_row, forward_row, RowDropout};
use super::tensor::{affine, affine_backward, softmax, softmax_backward, Matrix};
use super::ModelParams;
use crate::dataset::EncodedInstance;
use crate::error::{Error, Result};
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Predict the masked comparative label from `[CLS] B [SEP] E [SEP]`.
    Clm,
    /// Predict the three-way trial result from the label probabilities.
    Ctrp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    /// Update every parameter.
    Full,
    /// Freeze the encoder; only the two heads learn.
    HeadOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            clip_norm: 1.0,
            batch_size: 32,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_accuracy: Option<f64>,
}

const GRAD_CHUNK: usize = 8;
const PROB_FLOOR: f64 = 1e-300;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn clm_probs(params: &ModelParams, h_cls: &[f64]) -> Vec<f64> {
    let mut z = affine(&params.clm_head_w, &params.clm_head_b, h_cls);
    softmax(&mut z);
    z
}

fn result_probs(params: &ModelParams, label_probs: &[f64]) -> Vec<f64> {
    let mut z = affine(&params.result_head_w, &params.result_head_b, label_probs);
    softmax(&mut z);
    z
}

fn validate_batch(params: &ModelParams, batch: &[EncodedInstance], objective: Objective) -> Result<()> {
    let classes = match objective {
        Objective::Clm => params.config.label_count,
        Objective::Ctrp => 3,
    };
    for inst in batch {
        if inst.label_id as usize >= classes {
            return Err(Error::invalid(
                "batch",
                format!("label id {} out of range for {} classes", inst.label_id, classes),
            ));
        }
    }
    Ok(())
}

/// `[CLS]` states for a batch without retaining full traces.
pub(crate) fn cls_states(params: &ModelParams, batch: &[EncodedInstance]) -> Result<Matrix> {
    let rows = super::encoder::forward_batch(params, batch)?;
    Ok(rows.h_cls)
}

/// Mean cross-entropy of the comparative-label head plus the per-instance
/// label probabilities.
pub fn clm_loss(params: &ModelParams, batch: &[EncodedInstance]) -> Result<(f64, Matrix)> {
    validate_batch(params, batch, Objective::Clm)?;
    let h_cls = cls_states(params, batch)?;
    let c = params.config.label_count;
    let mut probs = Matrix::zeros(batch.len(), c);
    let mut loss = 0.0;
    for (i, inst) in batch.iter().enumerate() {
        let p = clm_probs(params, h_cls.row(i));
        loss -= p[inst.label_id as usize].max(PROB_FLOOR).ln();
        probs.row_mut(i).copy_from_slice(&p);
    }
    Ok((loss / batch.len().max(1) as f64, probs))
}

/// Three-way result probabilities: the result head consumes the label
/// probability simplex, not logits.
pub fn ctrp_forward(params: &ModelParams, batch: &[EncodedInstance]) -> Result<Matrix> {
    let h_cls = cls_states(params, batch)?;
    let mut out = Matrix::zeros(batch.len(), 3);
    for i in 0..batch.len() {
        let p1 = clm_probs(params, h_cls.row(i));
        out.row_mut(i).copy_from_slice(&result_probs(params, &p1));
    }
    Ok(out)
}

/// Argmax comparative labels with probabilities.
pub fn predict_clm(params: &ModelParams, batch: &[EncodedInstance]) -> Result<(Vec<usize>, Matrix)> {
    let (_, probs) = clm_loss_lenient(params, batch)?;
    Ok((argmax_rows(&probs), probs))
}

// clm_loss without label validation, for prediction on unlabeled data
fn clm_loss_lenient(params: &ModelParams, batch: &[EncodedInstance]) -> Result<(f64, Matrix)> {
    let h_cls = cls_states(params, batch)?;
    let c = params.config.label_count;
    let mut probs = Matrix::zeros(batch.len(), c);
    for i in 0..batch.len() {
        let p = clm_probs(params, h_cls.row(i));
        probs.row_mut(i).copy_from_slice(&p);
    }
    Ok((0.0, probs))
}

/// Argmax trial results with probabilities.
pub fn predict_result(params: &ModelParams, batch: &[EncodedInstance]) -> Result<(Vec<usize>, Matrix)> {
    let probs = ctrp_forward(params, batch)?;
    Ok((argmax_rows(&probs), probs))
}

/// `[CLS]` embeddings, one row per instance, in input order.
pub fn export_embeddings(params: &ModelParams, batch: &[EncodedInstance]) -> Result<Matrix> {
    cls_states(params, batch)
}

fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows)
        .map(|i| {
            m.row(i)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
                .map(|(j, _)| j)
                .unwrap_or(0)
        })
        .collect()
}

// Loss and gradient of one row, accumulated into `grads`.
fn row_grad(
    params: &ModelParams,
    inst: &EncodedInstance,
    objective: Objective,
    dropout: Option<RowDropout<'_>>,
    grads: &mut ModelParams,
) -> f64 {
    let trace = forward_row(params, inst, dropout);
    let h_cls = trace.h_cls().to_vec();
    let p1 = clm_probs(params, &h_cls);
    let label = inst.label_id as usize;

    let (loss, dz1) = match objective {
        Objective::Clm => {
            let loss = -p1[label].max(PROB_FLOOR).ln();
            let mut dz1 = p1.clone();
            dz1[label] -= 1.0;
            (loss, dz1)
        }
        Objective::Ctrp => {
            let p2 = result_probs(params, &p1);
            let loss = -p2[label].max(PROB_FLOOR).ln();
            let mut dz2 = p2.clone();
            dz2[label] -= 1.0;
            let dp1 = affine_backward(
                &params.result_head_w,
                &mut grads.result_head_w,
                &mut grads.result_head_b,
                &p1,
                &dz2,
            );
            (loss, softmax_backward(&p1, &dp1))
        }
    };

    let d_hcls = affine_backward(
        &params.clm_head_w,
        &mut grads.clm_head_w,
        &mut grads.clm_head_b,
        &h_cls,
        &dz1,
    );
    backward_row(params, &trace, &d_hcls, grads);
    loss
}

/// Mean loss and mean-loss gradients over a batch. `dropout_key`, when set,
/// seeds a per-row dropout stream, derived from the row's position so the
/// result is independent of chunking and thread count.
pub fn batch_loss_and_grads(
    params: &ModelParams,
    batch: &[EncodedInstance],
    objective: Objective,
    dropout_key: Option<u64>,
) -> Result<(f64, ModelParams)> {
    validate_batch(params, batch, objective)?;
    let indexed: Vec<(usize, &EncodedInstance)> = batch.iter().enumerate().collect();
    let partials = exec::map_chunks(&indexed, GRAD_CHUNK, |chunk| {
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for (row_idx, inst) in chunk {
            let mut rng;
            let dropout = match dropout_key {
                Some(key) if params.config.dropout > 0.0 => {
                    rng = ChaCha8Rng::seed_from_u64(splitmix64(key ^ (*row_idx as u64)));
                    Some(RowDropout {
                        rng: &mut rng,
                        p: params.config.dropout,
                    })
                }
                _ => None,
            };
            loss += row_grad(params, inst, objective, dropout, &mut grads);
        }
        (loss, grads)
    });

    let mut total_loss = 0.0;
    let mut grads = params.zeros_like();
    for (loss, g) in partials {
        total_loss += loss;
        grads.add_assign(&g);
    }
    let scale = 1.0 / batch.len().max(1) as f64;
    for (_, t) in grads.visit_mut() {
        for v in &mut t.data {
            *v *= scale;
        }
    }
    Ok((total_loss * scale, grads))
}

/// Mean loss only (used by the finite-difference gradient oracle).
pub fn batch_loss(
    params: &ModelParams,
    batch: &[EncodedInstance],
    objective: Objective,
) -> Result<f64> {
    validate_batch(params, batch, objective)?;
    let mut loss = 0.0;
    for inst in batch {
        let trace = forward_row(params, inst, None);
        let p1 = clm_probs(params, trace.h_cls());
        let label = inst.label_id as usize;
        loss += match objective {
            Objective::Clm => -p1[label].max(PROB_FLOOR).ln(),
            Objective::Ctrp => -result_probs(params, &p1)[label].max(PROB_FLOOR).ln(),
        };
    }
    Ok(loss / batch.len().max(1) as f64)
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: u64,
}

impl Adam {
    fn new(params: &ModelParams) -> Adam {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &ModelParams,
        cfg: &TrainConfig,
        trainable: impl Fn(&str) -> bool,
    ) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let m_it = self.m.visit_mut();
        let v_it = self.v.visit_mut();
        let g_it = grads.visit();
        for (((name, p), (_, m)), ((_, v), (_, g))) in params
            .visit_mut()
            .into_iter()
            .zip(m_it)
            .zip(v_it.into_iter().zip(g_it))
        {
            if !trainable(&name) {
                continue;
            }
            for i in 0..p.data.len() {
                let mut grad = g.data[i];
                if cfg.weight_decay > 0.0 {
                    grad += cfg.weight_decay * p.data[i];
                }
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * grad;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * grad * grad;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
            }
            p.quantize_f32();
        }
    }
}

fn clip_gradients(grads: &mut ModelParams, clip_norm: f64, trainable: impl Fn(&str) -> bool) {
    if clip_norm <= 0.0 {
        return;
    }
    let mut sq = 0.0;
    for (name, t) in grads.visit() {
        if trainable(&name) {
            sq += t.data.iter().map(|v| v * v).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for (name, t) in grads.visit_mut() {
            if trainable(&name) {
                for v in &mut t.data {
                    *v *= scale;
                }
            }
        }
    }
}

fn is_head(name: &str) -> bool {
    name.starts_with("clm_head") || name.starts_with("result_head")
}

fn run_training(
    params: &mut ModelParams,
    train: &[EncodedInstance],
    holdout: Option<&[EncodedInstance]>,
    cfg: &TrainConfig,
    objective: Objective,
    mode: FinetuneMode,
    mut on_epoch: impl FnMut(usize, &ModelParams, &EpochStat) -> Result<()>,
) -> Result<Vec<EpochStat>> {
    if train.is_empty() && cfg.epochs > 0 {
        return Err(Error::invalid("training", "empty training set"));
    }
    validate_batch(params, train, objective)?;
    let trainable = |name: &str| match mode {
        FinetuneMode::Full => true,
        FinetuneMode::HeadOnly => is_head(name),
    };
    let mut adam = Adam::new(params);
    let mut stats = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ (epoch as u64) << 17));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let batch: Vec<EncodedInstance> =
                chunk.iter().map(|&i| train[i].clone()).collect();
            let dropout_key = splitmix64(
                cfg.seed ^ 0xD50F_0000 ^ ((epoch as u64) << 32) ^ (batch_idx as u64),
            );
            let (loss, mut grads) =
                batch_loss_and_grads(params, &batch, objective, Some(dropout_key))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite at epoch {epoch}, batch {batch_idx} \
                     (lr {}, batch size {})",
                    cfg.learning_rate,
                    batch.len()
                )));
            }
            clip_gradients(&mut grads, cfg.clip_norm, trainable);
            adam.step(params, &grads, cfg, trainable);
            loss_sum += loss * batch.len() as f64;
        }

        let train_loss = loss_sum / train.len() as f64;
        let holdout_accuracy = match holdout {
            Some(set) if !set.is_empty() => {
                let preds = match objective {
                    Objective::Clm => predict_clm(params, set)?.0,
                    Objective::Ctrp => predict_result(params, set)?.0,
                };
                let correct = preds
                    .iter()
                    .zip(set)
                    .filter(|(&p, inst)| p == inst.label_id as usize)
                    .count();
                Some(correct as f64 / set.len() as f64)
            }
            _ => None,
        };
        let stat = EpochStat {
            epoch,
            train_loss,
            holdout_accuracy,
        };
        on_epoch(epoch, params, &stat)?;
        stats.push(stat);
    }
    Ok(stats)
}

/// Comparative language-model pre-training with Adam. The callback runs
/// after every epoch (checkpoint writing lives there).
pub fn pretrain(
    params: &mut ModelParams,
    train: &[EncodedInstance],
    holdout: Option<&[EncodedInstance]>,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(usize, &ModelParams, &EpochStat) -> Result<()>,
) -> Result<Vec<EpochStat>> {
    run_training(params, train, holdout, cfg, Objective::Clm, FinetuneMode::Full, on_epoch)
}

/// Three-way result fine-tuning; `mode` selects full updates or a frozen
/// encoder.
pub fn finetune(
    params: &mut ModelParams,
    train: &[EncodedInstance],
    holdout: Option<&[EncodedInstance]>,
    cfg: &TrainConfig,
    mode: FinetuneMode,
    on_epoch: impl FnMut(usize, &ModelParams, &EpochStat) -> Result<()>,
) -> Result<Vec<EpochStat>> {
    run_training(params, train, holdout, cfg, Objective::Ctrp, mode, on_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig, MIN_MAX_LEN};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            layers: 1,
            hidden: 8,
            heads: 1,
            ff_dim: 16,
            max_len: MIN_MAX_LEN,
            vocab_size: 24,
            label_count: 5,
            dropout: 0.0,
        }
    }

    fn inst(ids: &[u32], label: u32) -> EncodedInstance {
        EncodedInstance {
            token_ids: ids.to_vec(),
            segment_ids: vec![0; ids.len()],
            label_id: label,
            adversarial: false,
        }
    }

    fn tiny_batch() -> Vec<EncodedInstance> {
        vec![
            inst(&[2, 7, 9, 11, 3, 6, 3], 1),
            inst(&[2, 8, 10, 3, 12, 13, 3], 4),
        ]
    }

    #[test]
    fn uniform_head_gives_log_c_loss() {
        let mut params = init_model(&tiny_config(), 5).unwrap();
        params.clm_head_w = params.clm_head_w.zeros_like();
        params.clm_head_b = params.clm_head_b.zeros_like();
        let (loss, probs) = clm_loss(&params, &tiny_batch()).unwrap();
        assert!((loss - (5f64).ln()).abs() < 1e-9);
        for i in 0..probs.rows {
            for j in 0..probs.cols {
                assert!((probs.get(i, j) - 0.2).abs() < 1e-9);
            }
        }
        // 34-class check of the analytic value
        assert!(((34f64).ln() - 3.5263605246161616).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_hand_computed_cross_entropy() {
        let params = init_model(&tiny_config(), 6).unwrap();
        let batch = tiny_batch();
        let (loss, probs) = clm_loss(&params, &batch).unwrap();
        let manual = -(probs.get(0, 1).ln() + probs.get(1, 4).ln()) / 2.0;
        assert!((loss - manual).abs() < 1e-12);
    }

    #[test]
    fn probs_rows_sum_to_one() {
        let params = init_model(&tiny_config(), 7).unwrap();
        let (_, probs) = clm_loss(&params, &tiny_batch()).unwrap();
        for i in 0..probs.rows {
            assert!((probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let r = ctrp_forward(&params, &tiny_batch()).unwrap();
        for i in 0..r.rows {
            assert!((r.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_result_head_gives_uniform_thirds() {
        let mut params = init_model(&tiny_config(), 8).unwrap();
        params.result_head_w = params.result_head_w.zeros_like();
        params.result_head_b = params.result_head_b.zeros_like();
        let r = ctrp_forward(&params, &tiny_batch()).unwrap();
        for i in 0..r.rows {
            for j in 0..3 {
                assert!((r.get(i, j) - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn result_head_consumes_probabilities_not_logits() {
        // independent scalar recomputation of the head composition
        let params = init_model(&tiny_config(), 9).unwrap();
        let batch = tiny_batch();
        let h_cls = cls_states(&params, &batch).unwrap();
        let out = ctrp_forward(&params, &batch).unwrap();
        for i in 0..batch.len() {
            let h = h_cls.row(i);
            let c = params.config.label_count;
            let mut z1 = vec![0.0; c];
            for o in 0..c {
                let mut acc = params.clm_head_b.data[o];
                for j in 0..h.len() {
                    acc += params.clm_head_w.get(o, j) * h[j];
                }
                z1[o] = acc;
            }
            let mx = z1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = z1.iter().map(|v| (v - mx).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let p1: Vec<f64> = exps.iter().map(|v| v / sum).collect();
            assert!((p1.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mut z2 = vec![0.0; 3];
            for o in 0..3 {
                let mut acc = params.result_head_b.data[o];
                for (j, &p) in p1.iter().enumerate() {
                    acc += params.result_head_w.get(o, j) * p;
                }
                z2[o] = acc;
            }
            let mx2 = z2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps2: Vec<f64> = z2.iter().map(|v| (v - mx2).exp()).collect();
            let sum2: f64 = exps2.iter().sum();
            for j in 0..3 {
                assert!((out.get(i, j) - exps2[j] / sum2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_epochs_leaves_params_unchanged() {
        let mut params = init_model(&tiny_config(), 10).unwrap();
        let before = params.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let stats = pretrain(&mut params, &tiny_batch(), None, &cfg, |_, _, _| Ok(())).unwrap();
        assert!(stats.is_empty());
        assert_eq!(params, before);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let config = ModelConfig {
            dropout: 0.1,
            ..tiny_config()
        };
        let batch: Vec<EncodedInstance> = (0..12)
            .map(|i| inst(&[2, 6 + (i % 10), 9, 3, 10, 3], (i % 5) as u32))
            .collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 33,
            ..TrainConfig::default()
        };
        let mut a = init_model(&config, 1).unwrap();
        let stats_a = pretrain(&mut a, &batch, None, &cfg, |_, _, _| Ok(())).unwrap();
        let mut b = init_model(&config, 1).unwrap();
        let stats_b = pretrain(&mut b, &batch, None, &cfg, |_, _, _| Ok(())).unwrap();
        assert_eq!(a, b);
        for (x, y) in stats_a.iter().zip(&stats_b) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        }
    }

    #[test]
    fn loss_decreases_on_overfit_fixture() {
        let mut params = init_model(&tiny_config(), 12).unwrap();
        let batch: Vec<EncodedInstance> = (0..10)
            .map(|i| inst(&[2, (6 + i) as u32, 3], (i % 5) as u32))
            .collect();
        let initial = batch_loss(&params, &batch, Objective::Clm).unwrap();
        assert!((initial - (5f64).ln()).abs() < 0.5);
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 10,
            seed: 3,
            learning_rate: 1e-2,
            clip_norm: 0.0,
            ..TrainConfig::default()
        };
        pretrain(&mut params, &batch, None, &cfg, |_, _, _| Ok(())).unwrap();
        let after = batch_loss(&params, &batch, Objective::Clm).unwrap();
        assert!(after < initial * 0.1, "loss {initial} -> {after}");
    }

    #[test]
    fn head_only_freezes_encoder() {
        let mut params = init_model(&tiny_config(), 13).unwrap();
        let before = params.clone();
        let batch: Vec<EncodedInstance> =
            (0..6).map(|i| inst(&[2, 6 + i, 3], (i % 3) as u32)).collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            ..TrainConfig::default()
        };
        finetune(&mut params, &batch, None, &cfg, FinetuneMode::HeadOnly, |_, _, _| Ok(()))
            .unwrap();
        assert_eq!(params.tok_emb, before.tok_emb);
        assert_eq!(params.layers[0].attn_q_w, before.layers[0].attn_q_w);
        assert_ne!(params.result_head_w, before.result_head_w);
    }

    #[test]
    fn gradients_match_finite_differences_sampled() {
        // spot check; the acceptance suite sweeps every parameter group
        let mut params = init_model(&tiny_config(), 14).unwrap();
        for objective in [Objective::Clm, Objective::Ctrp] {
            let batch = match objective {
                Objective::Clm => tiny_batch(),
                Objective::Ctrp => vec![
                    inst(&[2, 7, 9, 11, 3, 6, 3], 1),
                    inst(&[2, 8, 10, 3, 12, 13, 3], 2),
                ],
            };
            let (_, grads) = batch_loss_and_grads(&params, &batch, objective, None).unwrap();
            for (name, idx) in [
                ("tok_emb", 7 * 8 + 3),
                ("layer0.attn_q_w", 10),
                ("layer0.ff_in_w", 33),
                ("clm_head_w", 17),
                ("emb_ln_gain", 2),
            ] {
                let pos = params.visit().iter().position(|(n, _)| n == name).unwrap();
                let orig = params.visit()[pos].1.data[idx];
                let h = 1e-5;
                params.visit_mut()[pos].1.data[idx] = orig + h;
                let up = batch_loss(&params, &batch, objective).unwrap();
                params.visit_mut()[pos].1.data[idx] = orig - h;
                let down = batch_loss(&params, &batch, objective).unwrap();
                params.visit_mut()[pos].1.data[idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let analytic = grads.visit()[pos].1.data[idx];
                assert!(
                    (fd - analytic).abs() < 1e-6 + 1e-4 * analytic.abs().max(fd.abs()),
                    "{name}[{idx}] {objective:?}: fd {fd} vs analytic {analytic}"
                );
            }
        }
    }
}
