//! Multinomial logistic regression over sparse features, trained by
//! full-batch gradient descent with a halving-on-increase step rule that
//! keeps the regularized training loss non-increasing.

use super::bow::SparseVector;
use crate::error::{Error, Result};
use crate::model::Matrix;

#[derive(Debug, Clone)]
pub struct LogisticConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Recorded for reproducibility; zero initialization and full-batch
    /// descent make the fit deterministic regardless.
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            l2: 1e-3,
            epochs: 200,
            learning_rate: 1.0,
            seed: 0,
        }
    }
}

pub fn predict_logistic(weights: &Matrix, x: &SparseVector) -> [f64; 3] {
    let mut z = [0.0f64; 3];
    for k in 0..3 {
        z[k] = x.dot_dense(weights.row(k));
    }
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in &mut z {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in &mut z {
        *v /= sum;
    }
    z
}

fn loss_and_grad(
    weights: &Matrix,
    features: &[SparseVector],
    labels: &[usize],
    l2: f64,
) -> (f64, Matrix) {
    let n = features.len() as f64;
    let mut grad = Matrix::zeros(3, weights.cols);
    let mut loss = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let p = predict_logistic(weights, x);
        loss -= p[y].max(1e-300).ln();
        for k in 0..3 {
            let coeff = p[k] - if k == y { 1.0 } else { 0.0 };
            let row = grad.row_mut(k);
            for (&i, &v) in x.indices.iter().zip(&x.values) {
                row[i as usize] += coeff * v;
            }
        }
    }
    loss /= n;
    for v in &mut grad.data {
        *v /= n;
    }
    // L2 term
    let mut sq = 0.0;
    for (g, w) in grad.data.iter_mut().zip(&weights.data) {
        *g += l2 * w;
        sq += w * w;
    }
    loss += 0.5 * l2 * sq;
    (loss, grad)
}

pub fn logistic_loss(
    weights: &Matrix,
    features: &[SparseVector],
    labels: &[usize],
    l2: f64,
) -> f64 {
    loss_and_grad(weights, features, labels, l2).0
}

/// Gradient of the regularized mean cross-entropy, exposed for the
/// finite-difference oracle.
pub fn logistic_grad(
    weights: &Matrix,
    features: &[SparseVector],
    labels: &[usize],
    l2: f64,
) -> Matrix {
    loss_and_grad(weights, features, labels, l2).1
}

/// Fit a `3×dim` weight matrix. Errors on a non-finite loss.
pub fn train_logistic(
    features: &[SparseVector],
    labels: &[usize],
    dim: usize,
    cfg: &LogisticConfig,
) -> Result<Matrix> {
    if features.len() != labels.len() {
        return Err(Error::invalid("logistic regression", "feature/label length mismatch"));
    }
    if features.is_empty() {
        return Err(Error::invalid("logistic regression", "empty training set"));
    }
    if labels.iter().any(|&y| y >= 3) {
        return Err(Error::invalid("logistic regression", "label out of range"));
    }
    let mut weights = Matrix::zeros(3, dim);
    let mut lr = cfg.learning_rate;
    let (mut loss, mut grad) = loss_and_grad(&weights, features, labels, cfg.l2);
    for _ in 0..cfg.epochs {
        if !loss.is_finite() {
            return Err(Error::Numeric("logistic loss became non-finite".into()));
        }
        // backtrack until the step does not increase the loss
        let mut stepped = false;
        while lr > 1e-12 {
            let mut candidate = weights.clone();
            for (w, g) in candidate.data.iter_mut().zip(&grad.data) {
                *w -= lr * g;
            }
            let (cand_loss, cand_grad) = loss_and_grad(&candidate, features, labels, cfg.l2);
            if cand_loss.is_nan() {
                return Err(Error::Numeric("logistic loss became NaN".into()));
            }
            if cand_loss <= loss {
                weights = candidate;
                loss = cand_loss;
                grad = cand_grad;
                stepped = true;
                break;
            }
            lr *= 0.5;
        }
        if !stepped {
            break;
        }
    }
    Ok(weights)
}
