//! Metrics over the three-way result task: accuracy, 3-way and 2-way
//! macro-F1, the relative-accuracy robustness drop, the opposite-prediction
//! permutation test, and consolidated report generation.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::ResultLabel;
use crate::error::{Error, Result};
use crate::exec;

/// 3×3 counts indexed `[gold][pred]` in up, nodiff, down order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs<'a, I>(pairs: I) -> ConfusionMatrix
    where
        I: IntoIterator<Item = (&'a ResultLabel, &'a ResultLabel)>,
    {
        let mut cm = ConfusionMatrix::default();
        for (gold, pred) in pairs {
            cm.counts[gold.index()][pred.index()] += 1;
        }
        cm
    }

    pub fn add(&mut self, gold: ResultLabel, pred: ResultLabel) {
        self.counts[gold.index()][pred.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Per-class F1 in up, nodiff, down order.
    pub f1_per_class: [f64; 3],
    pub macro_f1_3way: f64,
    pub macro_f1_2way: f64,
    pub n: u64,
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Accuracy and macro-F1 from a confusion matrix. Degenerate 0/0
/// precision, recall and F1 are defined as 0; the 2-way macro-F1 averages
/// the up and down classes only.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix", "no evaluated instances"));
    }
    let mut f1_per_class = [0.0; 3];
    let mut trace = 0u64;
    for k in 0..3 {
        let tp = cm.counts[k][k];
        trace += tp;
        let gold_k: u64 = cm.counts[k].iter().sum();
        let pred_k: u64 = (0..3).map(|g| cm.counts[g][k]).sum();
        let precision = if pred_k == 0 { 0.0 } else { tp as f64 / pred_k as f64 };
        let recall = if gold_k == 0 { 0.0 } else { tp as f64 / gold_k as f64 };
        f1_per_class[k] = f1(precision, recall);
    }
    Ok(Metrics {
        accuracy: trace as f64 / total as f64,
        f1_per_class,
        macro_f1_3way: f1_per_class.iter().sum::<f64>() / 3.0,
        macro_f1_2way: (f1_per_class[ResultLabel::Up.index()]
            + f1_per_class[ResultLabel::Down.index()])
            / 2.0,
        n: total,
    })
}

/// Absolute relative accuracy decrease from the standard to the adversarial
/// setting, as a percentage of the standard accuracy.
pub fn robustness_delta(standard_acc: f64, adversarial_acc: f64) -> f64 {
    assert!(standard_acc > 0.0, "standard accuracy must be positive");
    (standard_acc - adversarial_acc).abs() / standard_acc * 100.0
}

/// Outcome of the opposite-prediction permutation test.
#[derive(Debug, Clone, Serialize)]
pub enum OppositeRateOutcome {
    /// No erroneous predictions; the share is undefined.
    Undefined,
    Defined {
        errors: u64,
        opposite: u64,
        /// Opposite share among erroneous predictions.
        share: f64,
        /// One-sided: fraction of permutations with share ≤ observed.
        p_value: f64,
    },
}

fn opposite_share(preds: &[ResultLabel], golds: &[ResultLabel]) -> Option<(u64, u64)> {
    let mut errors = 0u64;
    let mut opposite = 0u64;
    for (p, g) in preds.iter().zip(golds) {
        if p != g {
            errors += 1;
            let flipped = matches!(
                (g, p),
                (ResultLabel::Up, ResultLabel::Down) | (ResultLabel::Down, ResultLabel::Up)
            );
            if flipped {
                opposite += 1;
            }
        }
    }
    if errors == 0 {
        None
    } else {
        Some((errors, opposite))
    }
}

/// Share of opposite predictions among errors, with a permutation-test
/// p-value under the null that predictions are exchangeable across
/// instances. Deterministic given the seed; permutations run in parallel on
/// per-permutation derived seeds.
pub fn opposite_rate_test(
    preds: &[ResultLabel],
    golds: &[ResultLabel],
    n_perm: usize,
    seed: u64,
) -> Result<OppositeRateOutcome> {
    if preds.len() != golds.len() {
        return Err(Error::invalid("opposite-rate test", "length mismatch"));
    }
    if n_perm < 1000 {
        return Err(Error::invalid("opposite-rate test", "need at least 1000 permutations"));
    }
    let Some((errors, opposite)) = opposite_share(preds, golds) else {
        return Ok(OppositeRateOutcome::Undefined);
    };
    let observed = opposite as f64 / errors as f64;

    let hits: u64 = exec::map_range(n_perm, |k| permutation_hit(preds, golds, seed, observed, k))
        .into_iter()
        .sum();
    Ok(OppositeRateOutcome::Defined {
        errors,
        opposite,
        share: observed,
        p_value: hits as f64 / n_perm as f64,
    })
}

/// Sequential twin of [`opposite_rate_test`], for benchmarks.
pub fn opposite_rate_test_seq(
    preds: &[ResultLabel],
    golds: &[ResultLabel],
    n_perm: usize,
    seed: u64,
) -> Result<OppositeRateOutcome> {
    if preds.len() != golds.len() {
        return Err(Error::invalid("opposite-rate test", "length mismatch"));
    }
    if n_perm < 1000 {
        return Err(Error::invalid("opposite-rate test", "need at least 1000 permutations"));
    }
    let Some((errors, opposite)) = opposite_share(preds, golds) else {
        return Ok(OppositeRateOutcome::Undefined);
    };
    let observed = opposite as f64 / errors as f64;
    let hits: u64 =
        exec::map_range_seq(n_perm, |k| permutation_hit(preds, golds, seed, observed, k))
            .into_iter()
            .sum();
    Ok(OppositeRateOutcome::Defined {
        errors,
        opposite,
        share: observed,
        p_value: hits as f64 / n_perm as f64,
    })
}

fn permutation_hit(
    preds: &[ResultLabel],
    golds: &[ResultLabel],
    seed: u64,
    observed: f64,
    k: usize,
) -> u64 {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E3779B97F4A7C15));
    let mut shuffled = preds.to_vec();
    shuffled.shuffle(&mut rng);
    match opposite_share(&shuffled, golds) {
        // zero-error permutations carry no evidence of a low share
        None => 0,
        Some((e, o)) => u64::from((o as f64 / e as f64) <= observed),
    }
}

/// One row of a prediction CSV (`id,gold,pred,p_up,p_nodiff,p_down`).
#[derive(Debug, Clone)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: ResultLabel,
    pub pred: ResultLabel,
    pub p_up: f64,
    pub p_nodiff: f64,
    pub p_down: f64,
}

pub const PREDICTION_CSV_HEADER: &str = "id,gold,pred,p_up,p_nodiff,p_down";

pub fn write_prediction_csv(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{PREDICTION_CSV_HEADER}").map_err(|e| Error::io(path, e))?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6}",
            r.id,
            r.gold.as_str(),
            r.pred.as_str(),
            r.p_up,
            r.p_nodiff,
            r.p_down
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_prediction_csv(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::invalid(
                "prediction csv",
                format!("{}:{}: expected 6 columns", path.display(), idx + 1),
            ));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid("prediction csv", format!("bad number {s:?}: {e}")))
        };
        out.push(PredictionRecord {
            id: cols[0].to_string(),
            gold: ResultLabel::parse(cols[1])?,
            pred: ResultLabel::parse(cols[2])?,
            p_up: parse_f(cols[3])?,
            p_nodiff: parse_f(cols[4])?,
            p_down: parse_f(cols[5])?,
        });
    }
    Ok(out)
}

pub fn metrics_from_predictions(records: &[PredictionRecord]) -> Result<Metrics> {
    let cm = ConfusionMatrix::from_pairs(records.iter().map(|r| (&r.gold, &r.pred)));
    compute_metrics(&cm)
}

/// Prediction files for one system: standard setting and, optionally, the
/// adversarial one.
#[derive(Debug, Clone)]
pub struct SystemEntry {
    pub name: String,
    pub standard: Option<PathBuf>,
    pub adversarial: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemReport {
    pub name: String,
    pub standard: Option<Metrics>,
    pub adversarial: Option<Metrics>,
    /// Robustness |Δ| in percent; absent unless both settings evaluated.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub systems: Vec<SystemReport>,
    /// Files that were requested but could not be read.
    pub missing: Vec<String>,
}

/// Build the consolidated report. Missing or unreadable files are listed
/// and the report stays partial rather than failing.
pub fn evaluation_report(entries: &[SystemEntry]) -> EvaluationReport {
    let mut systems = Vec::new();
    let mut missing = Vec::new();
    let mut load = |path: &Option<PathBuf>| -> Option<Metrics> {
        let path = path.as_ref()?;
        match read_prediction_csv(path).and_then(|r| metrics_from_predictions(&r)) {
            Ok(m) => Some(m),
            Err(e) => {
                missing.push(format!("{}: {e}", path.display()));
                None
            }
        }
    };
    for entry in entries {
        let standard = load(&entry.standard);
        let adversarial = load(&entry.adversarial);
        let delta = match (&standard, &adversarial) {
            (Some(s), Some(a)) if s.accuracy > 0.0 => {
                Some(robustness_delta(s.accuracy, a.accuracy))
            }
            _ => None,
        };
        systems.push(SystemReport {
            name: entry.name.clone(),
            standard,
            adversarial,
            delta,
        });
    }
    EvaluationReport { systems, missing }
}

pub fn report_markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str("| System | Acc (std) | F1-3 (std) | F1-2 (std) | Acc (adv) | F1-3 (adv) | F1-2 (adv) | |Δ| |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    let cell = |m: &Option<Metrics>, f: fn(&Metrics) -> f64| -> String {
        match m {
            Some(m) => format!("{:.2}", f(m) * 100.0),
            None => "--".to_string(),
        }
    };
    for s in &report.systems {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            s.name,
            cell(&s.standard, |m| m.accuracy),
            cell(&s.standard, |m| m.macro_f1_3way),
            cell(&s.standard, |m| m.macro_f1_2way),
            cell(&s.adversarial, |m| m.accuracy),
            cell(&s.adversarial, |m| m.macro_f1_3way),
            cell(&s.adversarial, |m| m.macro_f1_2way),
            s.delta.map(|d| format!("{d:.1}")).unwrap_or_else(|| "--".to_string()),
        );
    }
    if !report.missing.is_empty() {
        out.push_str("\nMissing inputs:\n");
        for m in &report.missing {
            let _ = writeln!(out, "- {m}");
        }
    }
    out
}
