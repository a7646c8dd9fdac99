//! Disentanglement: turn a comparative match into a masked sentence and a
//! fine-grained result label, with the involutive antonym map over the
//! 34-label vocabulary, plus scrubbing of exploitable statistics tokens.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mine::{parse_direction, ComparativeMatch, Direction, Lexicon, PatternKind};

/// Placeholder substituted for every masked span.
pub const PLACEHOLDER: &str = "[MASK]";
/// Replacement for scrubbed statistics expressions.
pub const STAT_TOKEN: &str = "[STAT]";

/// A fine-grained comparative result label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparativeLabel {
    pub name: String,
    pub direction: Direction,
}

#[derive(Debug, Clone)]
struct LabelDef {
    name: String,
    antonym: usize,
    direction: Direction,
}

/// The label set with its antonym involution.
///
/// The loader enforces: exactly 34 labels, a total involutive antonym map
/// with exactly two fixed points, and the direction-flip law
/// `direction(antonym(x)) = flip(direction(x))`.
#[derive(Debug, Clone)]
pub struct LabelVocabulary {
    labels: Vec<LabelDef>,
    by_name: HashMap<String, usize>,
}

pub const LABEL_VOCAB_SIZE: usize = 34;
const DEFAULT_VOCAB: &str = include_str!("../data/label_vocabulary.tsv");

impl Default for LabelVocabulary {
    fn default() -> Self {
        LabelVocabulary::from_tsv(DEFAULT_VOCAB).expect("embedded vocabulary is consistent")
    }
}

impl LabelVocabulary {
    /// Parse TSV rows `label \t antonym \t direction` and validate all
    /// vocabulary invariants, refusing inconsistent files.
    pub fn from_tsv(content: &str) -> Result<Self> {
        let mut rows: Vec<(String, String, Direction)> = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(Error::invalid(
                    "label vocabulary",
                    format!("line {}: expected 3 tab-separated columns", idx + 1),
                ));
            }
            let direction = parse_direction(cols[2]).ok_or_else(|| {
                Error::invalid(
                    "label vocabulary",
                    format!("line {}: bad direction {:?}", idx + 1, cols[2]),
                )
            })?;
            rows.push((cols[0].to_string(), cols[1].to_string(), direction));
        }

        if rows.len() != LABEL_VOCAB_SIZE {
            return Err(Error::invalid(
                "label vocabulary",
                format!("expected {LABEL_VOCAB_SIZE} labels, found {}", rows.len()),
            ));
        }
        let mut by_name = HashMap::new();
        for (i, (name, _, _)) in rows.iter().enumerate() {
            if by_name.insert(name.clone(), i).is_some() {
                return Err(Error::invalid(
                    "label vocabulary",
                    format!("duplicate label {name:?}"),
                ));
            }
        }
        let mut labels = Vec::with_capacity(rows.len());
        for (name, antonym, direction) in &rows {
            let &antonym_idx = by_name.get(antonym).ok_or_else(|| {
                Error::invalid(
                    "label vocabulary",
                    format!("antonym {antonym:?} of {name:?} is not a label"),
                )
            })?;
            labels.push(LabelDef {
                name: name.clone(),
                antonym: antonym_idx,
                direction: *direction,
            });
        }

        let vocab = LabelVocabulary { labels, by_name };
        vocab.validate()?;
        Ok(vocab)
    }

    fn validate(&self) -> Result<()> {
        let mut fixed_points = 0;
        for (i, def) in self.labels.iter().enumerate() {
            let a = def.antonym;
            if self.labels[a].antonym != i {
                return Err(Error::invalid(
                    "label vocabulary",
                    format!("antonym map is not involutive at {:?}", def.name),
                ));
            }
            if self.labels[a].direction != def.direction.flip() {
                return Err(Error::invalid(
                    "label vocabulary",
                    format!("direction flip law violated at {:?}", def.name),
                ));
            }
            if a == i {
                fixed_points += 1;
                if def.direction != Direction::Eq {
                    return Err(Error::invalid(
                        "label vocabulary",
                        format!("self-antonym {:?} must have eq direction", def.name),
                    ));
                }
            }
        }
        if fixed_points != 2 {
            return Err(Error::invalid(
                "label vocabulary",
                format!("expected exactly 2 self-antonyms, found {fixed_points}"),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    /// Dense id of a label, usable as a training class index.
    pub fn id(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid("label", format!("unknown label {name:?}")))
    }

    pub fn name(&self, id: usize) -> &str {
        &self.labels[id].name
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|d| d.name.as_str())
    }

    pub fn direction(&self, name: &str) -> Result<Direction> {
        Ok(self.labels[self.id(name)?].direction)
    }

    /// The antonym map.
    pub fn rev(&self, name: &str) -> Result<&str> {
        let idx = self.id(name)?;
        Ok(&self.labels[self.labels[idx].antonym].name)
    }
}

/// Why a matched sentence was rejected instead of becoming a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Head word missing from the lexicon with no usable polarity.
    UnmappableHead,
    /// The mapped label is not in the loaded vocabulary.
    UnknownLabel,
}

#[derive(Debug, Clone)]
pub struct Disentangled {
    pub e_dis: String,
    pub r_text: String,
    pub label: String,
}

/// Replace each masked span with a placeholder, join the removed texts into
/// the free-text result, and map the head word to its vocabulary label.
///
/// Heads absent from the lexicon fall back to the generic label of their
/// polarity (`[MORE]`/`[LESS]`); equality heads have no such fallback and
/// reject the record.
pub fn disentangle(
    m: &ComparativeMatch,
    lexicon: &Lexicon,
    vocab: &LabelVocabulary,
) -> std::result::Result<Disentangled, RejectReason> {
    let mut e_dis = String::with_capacity(m.sentence.len());
    let mut r_parts = Vec::with_capacity(m.spans.len());
    let mut cursor = 0;
    for span in &m.spans {
        e_dis.push_str(&m.sentence[cursor..span.start]);
        e_dis.push_str(PLACEHOLDER);
        r_parts.push(&m.sentence[span.start..span.end]);
        cursor = span.end;
    }
    e_dis.push_str(&m.sentence[cursor..]);
    let r_text = r_parts.join(" ... ");

    let label = match m.pattern_kind {
        PatternKind::NodiffBetweenAnd => "[NODIFF]".to_string(),
        _ => match lexicon.get(&m.head) {
            Some(entry) => entry.label.clone(),
            None => match m.direction {
                Direction::Sup => "[MORE]".to_string(),
                Direction::Inf => "[LESS]".to_string(),
                Direction::Eq => return Err(RejectReason::UnmappableHead),
            },
        },
    };
    if !vocab.contains(&label) {
        return Err(RejectReason::UnknownLabel);
    }
    match vocab.direction(&label) {
        Ok(dir) if dir == m.direction => {}
        _ => return Err(RejectReason::UnknownLabel),
    }
    Ok(Disentangled {
        e_dis,
        r_text,
        label,
    })
}

static STAT_PATTERNS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    vec![
        // confidence intervals: "95% CI 1.2-3.4", "95% confidence interval 0.8 to 1.3"
        Regex::new(
            r"(?i)\b\d{1,2}(?:\.\d+)?%\s*(?:ci|confidence\s+interval)[\s:,]*[-+]?\d+(?:\.\d+)?\s*(?:[-–—]|to)\s*[-+]?\d+(?:\.\d+)?",
        )
        .unwrap(),
        // p values: "p < 0.05", "P=0.001", "p-value of 0.03", "p = .04"
        Regex::new(
            r"(?i)\bp(?:[\s-]*values?)?\s*(?:of\s+|[=<>≤≥:]\s*)+(?:0?\.\d+|\d+(?:\.\d+)?(?:[eE]-?\d+)?)",
        )
        .unwrap(),
    ]
});

/// Replace p-value and confidence-interval expressions with `[STAT]`.
/// Idempotent; all other text is unchanged.
pub fn mask_functional_tokens(text: &str) -> String {
    let mut out = text.to_string();
    for re in STAT_PATTERNS.iter() {
        out = re.replace_all(&out, STAT_TOKEN).into_owned();
    }
    out
}
