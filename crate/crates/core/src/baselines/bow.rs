//! Field-wise TF-IDF bag-of-words features: one vector per PICO field plus
//! the background, concatenated into disjoint index ranges.
//!
//! The exact variant is pinned: raw term counts, idf = ln((1+N)/(1+df)) + 1
//! with document frequencies from the training split only, and L2
//! normalization per field.

use std::collections::{BTreeMap, HashMap};

use crate::dataset::{tokenize, FinetuneInstance};

pub const FIELD_COUNT: usize = 5;
const FIELD_NAMES: [&str; FIELD_COUNT] =
    ["background", "population", "intervention", "comparator", "outcome"];

fn field_text(inst: &FinetuneInstance, field: usize) -> &str {
    match field {
        0 => &inst.background,
        1 => inst.population.as_deref().unwrap_or(""),
        2 => &inst.intervention,
        3 => &inst.comparator,
        4 => &inst.outcome,
        _ => unreachable!(),
    }
}

/// Sparse vector with sorted indices and no explicit zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| dense[i as usize] * v)
            .sum()
    }
}

struct FieldVocab {
    token_index: HashMap<String, u32>,
    idf: Vec<f64>,
}

/// Per-field vocabularies and idf weights, fitted on the training split.
pub struct IdfTable {
    fields: Vec<FieldVocab>,
    offsets: [u32; FIELD_COUNT],
    pub dim: usize,
}

impl IdfTable {
    pub fn fit(train: &[FinetuneInstance]) -> IdfTable {
        let n = train.len() as f64;
        let mut fields = Vec::with_capacity(FIELD_COUNT);
        for f in 0..FIELD_COUNT {
            let mut df: BTreeMap<String, u64> = BTreeMap::new();
            for inst in train {
                let mut seen: Vec<&String> = Vec::new();
                let tokens = tokenize(field_text(inst, f));
                for token in &tokens {
                    if !seen.iter().any(|s| *s == token) {
                        *df.entry(token.clone()).or_insert(0) += 1;
                        seen.push(token);
                    }
                }
            }
            let mut token_index = HashMap::with_capacity(df.len());
            let mut idf = Vec::with_capacity(df.len());
            for (i, (token, count)) in df.into_iter().enumerate() {
                token_index.insert(token, i as u32);
                idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
            }
            fields.push(FieldVocab { token_index, idf });
        }
        let mut offsets = [0u32; FIELD_COUNT];
        let mut acc = 0u32;
        for (f, field) in fields.iter().enumerate() {
            offsets[f] = acc;
            acc += field.idf.len() as u32;
        }
        IdfTable {
            fields,
            offsets,
            dim: acc as usize,
        }
    }

    /// Global index range of one field, handy for ablation checks.
    pub fn field_range(&self, field: usize) -> std::ops::Range<u32> {
        let start = self.offsets[field];
        let end = start + self.fields[field].idf.len() as u32;
        start..end
    }

    pub fn field_name(field: usize) -> &'static str {
        FIELD_NAMES[field]
    }
}

/// Concatenated field-wise TF-IDF features. Out-of-vocabulary tokens are
/// dropped; an absent population yields an all-zero block.
pub fn bow_features(inst: &FinetuneInstance, table: &IdfTable) -> SparseVector {
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (f, field) in table.fields.iter().enumerate() {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for token in tokenize(field_text(inst, f)) {
            if let Some(&local) = field.token_index.get(&token) {
                *counts.entry(local).or_insert(0.0) += 1.0;
            }
        }
        if counts.is_empty() {
            continue;
        }
        let norm: f64 = counts
            .iter()
            .map(|(&local, &tf)| {
                let w = tf * field.idf[local as usize];
                w * w
            })
            .sum::<f64>()
            .sqrt();
        for (local, tf) in counts {
            let w = tf * field.idf[local as usize];
            if w != 0.0 {
                indices.push(table.offsets[f] + local);
                values.push(w / norm);
            }
        }
    }
    SparseVector { indices, values }
}
