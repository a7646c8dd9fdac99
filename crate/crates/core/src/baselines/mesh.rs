//! Hierarchical-vocabulary nearest-neighbor baseline: map intervention,
//! comparator and outcome texts to indexed terms by longest string match,
//! score training instances by summed minimum tree distances, and vote
//! among all instances at the minimum distance.

use std::collections::BTreeMap;

use crate::dataset::{tokenize, FinetuneInstance, ResultLabel};
use crate::error::{Error, Result};
use crate::exec;

use super::{label_counts, majority_label};

/// Edges between two nodes of the tree-number forest: paths share their
/// longest common dot-prefix; nodes in different top-level trees are
/// bridged through the (configurable, default 0) root constant.
pub fn tree_dist_with_bridge(a: &str, b: &str, bridge: u32) -> Result<u32> {
    let sa = parse_tree_number(a)?;
    let sb = parse_tree_number(b)?;
    let lcp = sa.iter().zip(&sb).take_while(|(x, y)| x == y).count();
    let dist = (sa.len() - lcp) as u32 + (sb.len() - lcp) as u32;
    if lcp == 0 {
        Ok(dist + bridge)
    } else {
        Ok(dist)
    }
}

pub fn tree_dist(a: &str, b: &str) -> Result<u32> {
    tree_dist_with_bridge(a, b, 0)
}

fn parse_tree_number(s: &str) -> Result<Vec<&str>> {
    let segments: Vec<&str> = s.split('.').collect();
    if segments.is_empty()
        || segments
            .iter()
            .any(|seg| seg.is_empty() || !seg.chars().all(|c| c.is_ascii_alphanumeric()))
    {
        return Err(Error::invalid("tree number", format!("malformed {s:?}")));
    }
    Ok(segments)
}

/// Term-name to tree-numbers index, loaded from TSV rows
/// `term \t tree_number` (one row per pair; terms may repeat).
#[derive(Debug, Clone)]
pub struct MeshIndex {
    /// Term surface tokens (lower-cased) and the term's tree numbers.
    terms: Vec<(Vec<String>, Vec<String>)>,
    term_names: Vec<String>,
}

impl MeshIndex {
    pub fn from_tsv(content: &str) -> Result<MeshIndex> {
        let mut by_term: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let term = cols.next().unwrap_or_default().trim();
            let tree = cols.next().unwrap_or_default().trim();
            if term.is_empty() || tree.is_empty() {
                return Err(Error::invalid(
                    "term index",
                    format!("line {}: expected term \\t tree_number", idx + 1),
                ));
            }
            parse_tree_number(tree)?;
            by_term
                .entry(term.to_lowercase())
                .or_default()
                .push(tree.to_string());
        }
        let mut terms = Vec::with_capacity(by_term.len());
        let mut term_names = Vec::with_capacity(by_term.len());
        for (name, trees) in by_term {
            terms.push((tokenize(&name), trees));
            term_names.push(name);
        }
        Ok(MeshIndex { terms, term_names })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_name(&self, idx: usize) -> &str {
        &self.term_names[idx]
    }

    pub fn tree_numbers(&self, idx: usize) -> &[String] {
        &self.terms[idx].1
    }
}

/// Greedy leftmost-longest term match over the text's tokens; overlapped
/// shorter terms are skipped.
pub fn mesh_match(text: &str, index: &MeshIndex) -> Vec<usize> {
    let tokens = tokenize(text);
    let mut matched = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut best: Option<(usize, usize)> = None; // (term idx, token len)
        for (t, (term_tokens, _)) in index.terms.iter().enumerate() {
            let len = term_tokens.len();
            if len == 0 || i + len > tokens.len() {
                continue;
            }
            if tokens[i..i + len] == term_tokens[..]
                && best.map(|(_, blen)| len > blen).unwrap_or(true)
            {
                best = Some((t, len));
            }
        }
        match best {
            Some((t, len)) => {
                matched.push(t);
                i += len;
            }
            None => i += 1,
        }
    }
    matched
}

/// Matched terms of the three evidence elements of one instance.
#[derive(Debug, Clone)]
pub struct ElementTerms {
    pub intervention: Vec<usize>,
    pub comparator: Vec<usize>,
    pub outcome: Vec<usize>,
}

impl ElementTerms {
    fn of(inst: &FinetuneInstance, index: &MeshIndex) -> ElementTerms {
        ElementTerms {
            intervention: mesh_match(&inst.intervention, index),
            comparator: mesh_match(&inst.comparator, index),
            outcome: mesh_match(&inst.outcome, index),
        }
    }

    fn is_empty(&self) -> bool {
        self.intervention.is_empty() && self.comparator.is_empty() && self.outcome.is_empty()
    }

    fn elements(&self) -> [&Vec<usize>; 3] {
        [&self.intervention, &self.comparator, &self.outcome]
    }
}

/// Minimum pairwise tree distance over the matched terms' tree numbers.
fn element_distance(a: &[usize], b: &[usize], index: &MeshIndex, penalty: u32) -> u32 {
    let mut best: Option<u32> = None;
    for &ta in a {
        for &tb in b {
            for na in index.tree_numbers(ta) {
                for nb in index.tree_numbers(tb) {
                    let d = tree_dist(na, nb).expect("index validated tree numbers");
                    best = Some(best.map_or(d, |cur| cur.min(d)));
                }
            }
        }
    }
    best.unwrap_or(penalty)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshPrediction {
    pub label: ResultLabel,
    /// True when no element matched any term and the majority fallback was
    /// used.
    pub fallback: bool,
}

/// Nearest-neighbor classifier over a labeled training set.
pub struct MeshClassifier {
    index: MeshIndex,
    train_terms: Vec<ElementTerms>,
    train_labels: Vec<ResultLabel>,
    majority: ResultLabel,
    penalty: u32,
}

pub const DEFAULT_NO_MATCH_PENALTY: u32 = 100;

impl MeshClassifier {
    pub fn fit(index: MeshIndex, train: &[FinetuneInstance], penalty: u32) -> Result<MeshClassifier> {
        if train.is_empty() {
            return Err(Error::invalid("nearest-neighbor baseline", "empty training set"));
        }
        let train_terms = exec::map_slice(train, |inst| ElementTerms::of(inst, &index));
        let train_labels: Vec<ResultLabel> = train.iter().map(|i| i.result).collect();
        let majority = majority_label(&label_counts(&train_labels));
        Ok(MeshClassifier {
            index,
            train_terms,
            train_labels,
            majority,
            penalty,
        })
    }

    /// Instance distance: sum over the three elements of the minimum
    /// pairwise tree distance; elements without matches on either side
    /// contribute the no-match penalty.
    pub fn instance_distance(&self, a: &ElementTerms, b: &ElementTerms) -> u32 {
        a.elements()
            .iter()
            .zip(b.elements())
            .map(|(ea, eb)| element_distance(ea, eb, &self.index, self.penalty))
            .sum()
    }

    pub fn predict(&self, test: &FinetuneInstance) -> MeshPrediction {
        let test_terms = ElementTerms::of(test, &self.index);
        if test_terms.is_empty() {
            return self.fallback_prediction();
        }
        let distances =
            exec::map_slice(&self.train_terms, |t| self.instance_distance(&test_terms, t));
        self.vote(&distances)
    }

    /// Sequential twin of [`MeshClassifier::predict`], for benchmarks.
    pub fn predict_seq(&self, test: &FinetuneInstance) -> MeshPrediction {
        let test_terms = ElementTerms::of(test, &self.index);
        if test_terms.is_empty() {
            return self.fallback_prediction();
        }
        let distances =
            exec::map_slice_seq(&self.train_terms, |t| self.instance_distance(&test_terms, t));
        self.vote(&distances)
    }

    fn fallback_prediction(&self) -> MeshPrediction {
        MeshPrediction {
            label: self.majority,
            fallback: true,
        }
    }

    // majority label over all training instances at the minimum distance
    fn vote(&self, distances: &[u32]) -> MeshPrediction {
        let min = distances.iter().copied().min().expect("non-empty train");
        let mut counts = [0u64; 3];
        for (d, label) in distances.iter().zip(&self.train_labels) {
            if *d == min {
                counts[label.index()] += 1;
            }
        }
        MeshPrediction {
            label: majority_label(&counts),
            fallback: false,
        }
    }
}
