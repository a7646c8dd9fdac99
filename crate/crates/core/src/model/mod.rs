//! Toy transformer encoder with the comparative-label pre-training head and
//! the three-way trial-result head stacked on its probabilities.
//!
//! Parameters live in f64 for the math but are kept on the f32 grid (they
//! are re-quantized after initialization and every optimizer step), so the
//! 32-bit checkpoint format round-trips bit-exactly.

mod checkpoint;
mod encoder;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use encoder::{forward_batch, forward_batch_seq, BatchOutput};
pub use tensor::Matrix;
pub use train::{
    batch_loss, batch_loss_and_grads, clm_loss, ctrp_forward, export_embeddings, finetune,
    predict_clm, predict_result, pretrain, EpochStat, FinetuneMode, Objective, TrainConfig,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder dimensions. `max_len` has to cover
/// `[CLS] + background + [SEP] + evidence + [SEP]` at the default budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub label_count: usize,
    pub dropout: f64,
}

pub const MIN_MAX_LEN: usize = 1 + 256 + 1 + 128 + 1;

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            hidden: 64,
            heads: 2,
            ff_dim: 256,
            max_len: 448,
            vocab_size: 8192,
            label_count: 34,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::invalid(
                "model config",
                format!("hidden {} not divisible by heads {}", self.hidden, self.heads),
            ));
        }
        if self.max_len < MIN_MAX_LEN {
            return Err(Error::invalid(
                "model config",
                format!("max_len {} below minimum {MIN_MAX_LEN}", self.max_len),
            ));
        }
        if self.layers == 0 || self.ff_dim == 0 || self.vocab_size == 0 || self.label_count == 0 {
            return Err(Error::invalid("model config", "zero-sized dimension"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("model config", "dropout must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub attn_q_w: Matrix,
    pub attn_q_b: Matrix,
    pub attn_k_w: Matrix,
    pub attn_k_b: Matrix,
    pub attn_v_w: Matrix,
    pub attn_v_b: Matrix,
    pub attn_out_w: Matrix,
    pub attn_out_b: Matrix,
    pub ln1_gain: Matrix,
    pub ln1_bias: Matrix,
    pub ff_in_w: Matrix,
    pub ff_in_b: Matrix,
    pub ff_out_w: Matrix,
    pub ff_out_b: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_bias: Matrix,
}

impl LayerParams {
    fn zeros(config: &ModelConfig) -> LayerParams {
        let h = config.hidden;
        let f = config.ff_dim;
        LayerParams {
            attn_q_w: Matrix::zeros(h, h),
            attn_q_b: Matrix::zeros(1, h),
            attn_k_w: Matrix::zeros(h, h),
            attn_k_b: Matrix::zeros(1, h),
            attn_v_w: Matrix::zeros(h, h),
            attn_v_b: Matrix::zeros(1, h),
            attn_out_w: Matrix::zeros(h, h),
            attn_out_b: Matrix::zeros(1, h),
            ln1_gain: Matrix::zeros(1, h),
            ln1_bias: Matrix::zeros(1, h),
            ff_in_w: Matrix::zeros(f, h),
            ff_in_b: Matrix::zeros(1, f),
            ff_out_w: Matrix::zeros(h, f),
            ff_out_b: Matrix::zeros(1, h),
            ln2_gain: Matrix::zeros(1, h),
            ln2_bias: Matrix::zeros(1, h),
        }
    }
}

/// All model weights: embeddings, encoder layers, the label head
/// (`label probabilities = softmax(W h_cls + b)`) and the result head
/// stacked on those probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub seg_emb: Matrix,
    pub emb_ln_gain: Matrix,
    pub emb_ln_bias: Matrix,
    pub layers: Vec<LayerParams>,
    pub clm_head_w: Matrix,
    pub clm_head_b: Matrix,
    pub result_head_w: Matrix,
    pub result_head_b: Matrix,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> ModelParams {
        let h = config.hidden;
        ModelParams {
            config: config.clone(),
            tok_emb: Matrix::zeros(config.vocab_size, h),
            pos_emb: Matrix::zeros(config.max_len, h),
            seg_emb: Matrix::zeros(2, h),
            emb_ln_gain: Matrix::zeros(1, h),
            emb_ln_bias: Matrix::zeros(1, h),
            layers: (0..config.layers).map(|_| LayerParams::zeros(config)).collect(),
            clm_head_w: Matrix::zeros(config.label_count, h),
            clm_head_b: Matrix::zeros(1, config.label_count),
            result_head_w: Matrix::zeros(3, config.label_count),
            result_head_b: Matrix::zeros(1, 3),
        }
    }

    pub fn zeros_like(&self) -> ModelParams {
        ModelParams::zeros(&self.config)
    }

    /// Named tensors in a fixed order (initialization, Adam state, the
    /// checkpoint table and the gradient checker all share it).
    pub fn visit(&self) -> Vec<(String, &Matrix)> {
        let mut v: Vec<(String, &Matrix)> = vec![
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
            ("seg_emb".into(), &self.seg_emb),
            ("emb_ln_gain".into(), &self.emb_ln_gain),
            ("emb_ln_bias".into(), &self.emb_ln_bias),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            v.push((format!("layer{i}.attn_q_w"), &layer.attn_q_w));
            v.push((format!("layer{i}.attn_q_b"), &layer.attn_q_b));
            v.push((format!("layer{i}.attn_k_w"), &layer.attn_k_w));
            v.push((format!("layer{i}.attn_k_b"), &layer.attn_k_b));
            v.push((format!("layer{i}.attn_v_w"), &layer.attn_v_w));
            v.push((format!("layer{i}.attn_v_b"), &layer.attn_v_b));
            v.push((format!("layer{i}.attn_out_w"), &layer.attn_out_w));
            v.push((format!("layer{i}.attn_out_b"), &layer.attn_out_b));
            v.push((format!("layer{i}.ln1_gain"), &layer.ln1_gain));
            v.push((format!("layer{i}.ln1_bias"), &layer.ln1_bias));
            v.push((format!("layer{i}.ff_in_w"), &layer.ff_in_w));
            v.push((format!("layer{i}.ff_in_b"), &layer.ff_in_b));
            v.push((format!("layer{i}.ff_out_w"), &layer.ff_out_w));
            v.push((format!("layer{i}.ff_out_b"), &layer.ff_out_b));
            v.push((format!("layer{i}.ln2_gain"), &layer.ln2_gain));
            v.push((format!("layer{i}.ln2_bias"), &layer.ln2_bias));
        }
        v.push(("clm_head_w".into(), &self.clm_head_w));
        v.push(("clm_head_b".into(), &self.clm_head_b));
        v.push(("result_head_w".into(), &self.result_head_w));
        v.push(("result_head_b".into(), &self.result_head_b));
        v
    }

    pub fn visit_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut v: Vec<(String, &mut Matrix)> = vec![
            ("tok_emb".into(), &mut self.tok_emb),
            ("pos_emb".into(), &mut self.pos_emb),
            ("seg_emb".into(), &mut self.seg_emb),
            ("emb_ln_gain".into(), &mut self.emb_ln_gain),
            ("emb_ln_bias".into(), &mut self.emb_ln_bias),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            v.push((format!("layer{i}.attn_q_w"), &mut layer.attn_q_w));
            v.push((format!("layer{i}.attn_q_b"), &mut layer.attn_q_b));
            v.push((format!("layer{i}.attn_k_w"), &mut layer.attn_k_w));
            v.push((format!("layer{i}.attn_k_b"), &mut layer.attn_k_b));
            v.push((format!("layer{i}.attn_v_w"), &mut layer.attn_v_w));
            v.push((format!("layer{i}.attn_v_b"), &mut layer.attn_v_b));
            v.push((format!("layer{i}.attn_out_w"), &mut layer.attn_out_w));
            v.push((format!("layer{i}.attn_out_b"), &mut layer.attn_out_b));
            v.push((format!("layer{i}.ln1_gain"), &mut layer.ln1_gain));
            v.push((format!("layer{i}.ln1_bias"), &mut layer.ln1_bias));
            v.push((format!("layer{i}.ff_in_w"), &mut layer.ff_in_w));
            v.push((format!("layer{i}.ff_in_b"), &mut layer.ff_in_b));
            v.push((format!("layer{i}.ff_out_w"), &mut layer.ff_out_w));
            v.push((format!("layer{i}.ff_out_b"), &mut layer.ff_out_b));
            v.push((format!("layer{i}.ln2_gain"), &mut layer.ln2_gain));
            v.push((format!("layer{i}.ln2_bias"), &mut layer.ln2_bias));
        }
        v.push(("clm_head_w".into(), &mut self.clm_head_w));
        v.push(("clm_head_b".into(), &mut self.clm_head_b));
        v.push(("result_head_w".into(), &mut self.result_head_w));
        v.push(("result_head_b".into(), &mut self.result_head_b));
        v
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, a), (_, b)) in self.visit_mut().into_iter().zip(other.visit()) {
            a.add_assign(b);
        }
    }

    pub fn quantize_f32(&mut self) {
        for (_, t) in self.visit_mut() {
            t.quantize_f32();
        }
    }
}

const INIT_STD: f64 = 0.02;

/// Deterministic initialization: embeddings and linear weights from a
/// scaled normal, biases zero, layer-norm gain one.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut params = ModelParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, tensor) in params.visit_mut() {
        if name.ends_with("_gain") {
            tensor.data.fill(1.0);
        } else if name.ends_with("_b") || name.ends_with("_bias") {
            // stays zero
        } else {
            for v in &mut tensor.data {
                *v = INIT_STD * normal_sample(&mut rng);
            }
        }
    }
    params.quantize_f32();
    Ok(params)
}

// Box-Muller; two uniforms per sample keeps the stream deterministic.
fn normal_sample(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            layers: 1,
            hidden: 8,
            heads: 1,
            ff_dim: 16,
            max_len: MIN_MAX_LEN,
            vocab_size: 30,
            label_count: 5,
            dropout: 0.0,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let config = tiny_config();
        let a = init_model(&config, 3).unwrap();
        let b = init_model(&config, 3).unwrap();
        assert_eq!(a, b);
        let c = init_model(&config, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn head_dim_arithmetic() {
        let config = ModelConfig {
            hidden: 64,
            heads: 2,
            ..ModelConfig::default()
        };
        assert_eq!(config.head_dim(), 32);
    }

    #[test]
    fn indivisible_heads_rejected() {
        let config = ModelConfig {
            hidden: 63,
            heads: 2,
            ..ModelConfig::default()
        };
        assert!(init_model(&config, 0).is_err());
    }

    #[test]
    fn params_are_on_f32_grid() {
        let params = init_model(&tiny_config(), 9).unwrap();
        for (_, t) in params.visit() {
            for &v in &t.data {
                assert_eq!(v, v as f32 as f64);
            }
        }
    }

    #[test]
    fn visit_orders_agree() {
        let mut params = init_model(&tiny_config(), 1).unwrap();
        let names: Vec<String> = params.visit().into_iter().map(|(n, _)| n).collect();
        let names_mut: Vec<String> = params.visit_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, names_mut);
        assert_eq!(names.len(), 5 + 16 + 4);
    }
}
