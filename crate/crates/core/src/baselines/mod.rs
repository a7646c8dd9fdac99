//! Non-neural reference systems: majority class, expected random
//! performance, bag-of-words with logistic regression, and hierarchical-
//! vocabulary nearest neighbors.

mod bow;
mod logistic;
mod mesh;

pub use bow::{bow_features, IdfTable, SparseVector};
pub use logistic::{logistic_grad, logistic_loss, predict_logistic, train_logistic, LogisticConfig};
pub use mesh::{
    mesh_match, tree_dist, tree_dist_with_bridge, MeshClassifier, MeshIndex, MeshPrediction,
    DEFAULT_NO_MATCH_PENALTY,
};

use crate::dataset::ResultLabel;
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, ConfusionMatrix, Metrics};

/// Tie-break order shared by the majority predictor and nearest-neighbor
/// voting: no-difference first, then up, then down.
pub fn majority_label(counts: &[u64; 3]) -> ResultLabel {
    let order = [ResultLabel::Nodiff, ResultLabel::Up, ResultLabel::Down];
    let mut best = order[0];
    let mut best_count = counts[best.index()];
    for &cand in &order[1..] {
        if counts[cand.index()] > best_count {
            best = cand;
            best_count = counts[cand.index()];
        }
    }
    best
}

pub fn label_counts<'a, I: IntoIterator<Item = &'a ResultLabel>>(labels: I) -> [u64; 3] {
    let mut counts = [0u64; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    counts
}

/// Predict the most frequent training label for every test instance.
pub fn majority_baseline(
    train_labels: &[ResultLabel],
    test_labels: &[ResultLabel],
) -> Result<(ResultLabel, Metrics)> {
    if train_labels.is_empty() {
        return Err(Error::invalid("majority baseline", "empty training labels"));
    }
    let majority = majority_label(&label_counts(train_labels));
    let cm = ConfusionMatrix::from_pairs(test_labels.iter().map(|g| (g, &majority)));
    Ok((majority, compute_metrics(&cm)?))
}

/// Closed-form expected metrics of predicting uniformly at random, via the
/// expected-count plug-in estimator: expected accuracy is 1/3; for class k
/// with gold share q_k, expected precision is q_k and expected recall 1/3,
/// so plug-in F1_k = 2 q_k / (3 q_k + 1).
pub fn random_baseline_expected(test_distribution: &[f64; 3]) -> Result<Metrics> {
    let sum: f64 = test_distribution.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || test_distribution.iter().any(|&q| q < 0.0) {
        return Err(Error::invalid(
            "random baseline",
            "distribution must be non-negative and sum to 1",
        ));
    }
    let mut f1_per_class = [0.0; 3];
    for (k, &q) in test_distribution.iter().enumerate() {
        f1_per_class[k] = if q > 0.0 { 2.0 * q / (3.0 * q + 1.0) } else { 0.0 };
    }
    Ok(Metrics {
        accuracy: 1.0 / 3.0,
        f1_per_class,
        macro_f1_3way: f1_per_class.iter().sum::<f64>() / 3.0,
        macro_f1_2way: (f1_per_class[ResultLabel::Up.index()]
            + f1_per_class[ResultLabel::Down.index()])
            / 2.0,
        n: 0,
    })
}
