//! Comparative-sentence detection and evidence mining.
//!
//! Detection is pattern-driven: superiority/inferiority via
//! `more/less/-er ... than ...`, equality via `similar ... to ...` and
//! `no difference ... between ... and ...`. A token only counts as an `-er`
//! comparative when its surface form is in the lexicon, which blocks
//! lookalikes such as "other", "whether" and "after".

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_ws, ChunkedAbstract, Segmenter};
use crate::disentangle::{disentangle, mask_functional_tokens, LabelVocabulary, RejectReason};
use crate::error::{Error, Result};
use crate::exec;

/// Polarity of a comparative phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sup,
    Eq,
    Inf,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Sup => Direction::Inf,
            Direction::Inf => Direction::Sup,
            Direction::Eq => Direction::Eq,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Sup => 0,
            Direction::Eq => 1,
            Direction::Inf => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PatternKind {
    MoreThan,
    LessThan,
    ErThan,
    SimilarTo,
    NodiffBetweenAnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    ComparativePhrase,
    Connective,
}

type MaskSpanTuple = (usize, usize, SpanKind);

/// A byte range to mask out of the sentence, tagged by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "MaskSpanTuple", into = "MaskSpanTuple")]
pub struct MaskSpan {
    pub start: usize,
    pub end: usize,
    pub kind: SpanKind,
}

impl From<MaskSpanTuple> for MaskSpan {
    fn from((start, end, kind): MaskSpanTuple) -> Self {
        MaskSpan { start, end, kind }
    }
}

impl From<MaskSpan> for MaskSpanTuple {
    fn from(s: MaskSpan) -> Self {
        (s.start, s.end, s.kind)
    }
}

/// A detected comparative sentence with the ranges to be masked.
///
/// When a `compared to`/`compared with` connective directly follows the
/// comparative phrase the two ranges merge into a single span, matching the
/// single placeholder such sentences disentangle to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparativeMatch {
    pub sentence: String,
    pub pattern_kind: PatternKind,
    pub direction: Direction,
    pub spans: Vec<MaskSpan>,
    /// Lower-cased comparative head word ("higher", "more", "similar", ...);
    /// `"no difference"` for the equality-by-negation pattern.
    pub head: String,
}

impl ComparativeMatch {
    pub fn span_text(&self, span: &MaskSpan) -> &str {
        &self.sentence[span.start..span.end]
    }
}

/// One lexicon row: a comparative surface form with its lemma, polarity and
/// fine-grained label.
#[derive(Debug, Clone)]
pub struct LexiconEntry {
    pub surface: String,
    pub lemma: String,
    pub direction: Direction,
    pub label: String,
}

/// Comparative lexicon plus the degree-modifier list that phrase spans may
/// extend over (at most three, immediately left of the head).
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: HashMap<String, LexiconEntry>,
    modifiers: Vec<String>,
}

const DEFAULT_LEXICON: &str = include_str!("../data/comparative_lexicon.tsv");
const DEFAULT_MODIFIERS: [&str; 5] = ["slightly", "significantly", "markedly", "much", "far"];
const MAX_MODIFIERS: usize = 3;

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::from_tsv(DEFAULT_LEXICON).expect("embedded lexicon is well-formed")
    }
}

impl Lexicon {
    /// Parse TSV rows `surface \t lemma \t direction \t label`. `#` lines
    /// are comments. Directions are `sup`, `eq` or `inf`.
    pub fn from_tsv(content: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(Error::invalid(
                    "lexicon",
                    format!("line {}: expected 4 tab-separated columns", idx + 1),
                ));
            }
            let direction = parse_direction(cols[2]).ok_or_else(|| {
                Error::invalid("lexicon", format!("line {}: bad direction {:?}", idx + 1, cols[2]))
            })?;
            let surface = cols[0].to_lowercase();
            entries.insert(
                surface.clone(),
                LexiconEntry {
                    surface,
                    lemma: cols[1].to_lowercase(),
                    direction,
                    label: cols[3].to_string(),
                },
            );
        }
        if entries.is_empty() {
            return Err(Error::invalid("lexicon", "no entries"));
        }
        Ok(Lexicon {
            entries,
            modifiers: DEFAULT_MODIFIERS.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn with_modifiers(mut self, modifiers: Vec<String>) -> Self {
        self.modifiers = modifiers.into_iter().map(|m| m.to_lowercase()).collect();
        self
    }

    pub fn get(&self, surface_lower: &str) -> Option<&LexiconEntry> {
        self.entries.get(surface_lower)
    }

    fn is_modifier(&self, token: &str) -> bool {
        self.modifiers.iter().any(|m| m == token)
    }
}

pub fn parse_direction(s: &str) -> Option<Direction> {
    match s.to_lowercase().as_str() {
        "sup" => Some(Direction::Sup),
        "eq" => Some(Direction::Eq),
        "inf" => Some(Direction::Inf),
        _ => None,
    }
}

// Word token with the byte range of its alphanumeric core (surrounding
// punctuation excluded so masks never swallow commas or parentheses).
struct Token {
    core_start: usize,
    core_end: usize,
    lower: String,
}

fn tokenize_with_spans(sentence: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start = None;
    let bytes_len = sentence.len();
    let push = |start: usize, end: usize, tokens: &mut Vec<Token>| {
        let word = &sentence[start..end];
        let core_rel_start = word
            .char_indices()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, _)| i);
        let Some(rel_start) = core_rel_start else {
            return; // pure punctuation token
        };
        let rel_end = word
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(word.len());
        let core_start = start + rel_start;
        let core_end = start + rel_end;
        tokens.push(Token {
            core_start,
            core_end,
            lower: sentence[core_start..core_end].to_lowercase(),
        });
    };
    for (i, ch) in sentence.char_indices() {
        if ch.is_whitespace() {
            if let Some(start) = word_start.take() {
                push(start, i, &mut tokens);
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(start) = word_start {
        push(start, bytes_len, &mut tokens);
    }
    tokens
}

/// Detect the leftmost comparative construction in a single sentence.
pub fn detect_comparative(sentence: &str, lexicon: &Lexicon) -> Option<ComparativeMatch> {
    let sentence = normalize_ws(sentence);
    let tokens = tokenize_with_spans(&sentence);

    for i in 0..tokens.len() {
        if tokens[i].lower == "no" {
            if let Some(m) = try_nodiff(&sentence, &tokens, i) {
                return Some(m);
            }
        }
        if let Some(entry) = lexicon.get(&tokens[i].lower) {
            let found = match entry.direction {
                Direction::Eq => try_equality(&sentence, &tokens, i, lexicon),
                Direction::Sup | Direction::Inf => {
                    try_ordered(&sentence, &tokens, i, entry, lexicon)
                }
            };
            if let Some(m) = found {
                return Some(m);
            }
        }
    }
    None
}

fn phrase_start(tokens: &[Token], head_idx: usize, lexicon: &Lexicon) -> usize {
    let mut first = head_idx;
    while first > 0
        && head_idx - first < MAX_MODIFIERS
        && lexicon.is_modifier(&tokens[first - 1].lower)
    {
        first -= 1;
    }
    first
}

// `[no (significant|statistically)* difference(s) between ... and ...]`,
// contiguous through "between".
fn try_nodiff(sentence: &str, tokens: &[Token], i: usize) -> Option<ComparativeMatch> {
    let mut j = i + 1;
    while j < tokens.len()
        && j - i - 1 < 2
        && (tokens[j].lower == "significant" || tokens[j].lower == "statistically")
    {
        j += 1;
    }
    if j >= tokens.len() || (tokens[j].lower != "difference" && tokens[j].lower != "differences") {
        return None;
    }
    let between = j + 1;
    if between >= tokens.len() || tokens[between].lower != "between" {
        return None;
    }
    let and_idx = (between + 1..tokens.len()).find(|&k| tokens[k].lower == "and")?;
    let spans = vec![
        MaskSpan {
            start: tokens[i].core_start,
            end: tokens[between].core_end,
            kind: SpanKind::ComparativePhrase,
        },
        MaskSpan {
            start: tokens[and_idx].core_start,
            end: tokens[and_idx].core_end,
            kind: SpanKind::Connective,
        },
    ];
    Some(ComparativeMatch {
        sentence: sentence.to_string(),
        pattern_kind: PatternKind::NodiffBetweenAnd,
        direction: Direction::Eq,
        spans,
        head: "no difference".to_string(),
    })
}

// `[similar/comparable ... to ...]`
fn try_equality(
    sentence: &str,
    tokens: &[Token],
    head_idx: usize,
    lexicon: &Lexicon,
) -> Option<ComparativeMatch> {
    let to_idx = (head_idx + 1..tokens.len()).find(|&k| tokens[k].lower == "to")?;
    let first = phrase_start(tokens, head_idx, lexicon);
    let spans = vec![
        MaskSpan {
            start: tokens[first].core_start,
            end: tokens[head_idx].core_end,
            kind: SpanKind::ComparativePhrase,
        },
        MaskSpan {
            start: tokens[to_idx].core_start,
            end: tokens[to_idx].core_end,
            kind: SpanKind::Connective,
        },
    ];
    Some(ComparativeMatch {
        sentence: sentence.to_string(),
        pattern_kind: PatternKind::SimilarTo,
        direction: Direction::Eq,
        spans,
        head: tokens[head_idx].lower.clone(),
    })
}

// Connective location: token range [first, last] and whether it is a
// `compared ...` variant rather than a bare "than".
struct Connective {
    first: usize,
    last: usize,
    compared_variant: bool,
}

fn find_connective(tokens: &[Token], after: usize) -> Option<Connective> {
    for j in after + 1..tokens.len() {
        if tokens[j].lower == "as"
            && j + 2 < tokens.len()
            && tokens[j + 1].lower == "compared"
            && (tokens[j + 2].lower == "to" || tokens[j + 2].lower == "with")
        {
            return Some(Connective {
                first: j,
                last: j + 2,
                compared_variant: true,
            });
        }
        if tokens[j].lower == "compared"
            && j + 1 < tokens.len()
            && (tokens[j + 1].lower == "to" || tokens[j + 1].lower == "with")
        {
            return Some(Connective {
                first: j,
                last: j + 1,
                compared_variant: true,
            });
        }
        if tokens[j].lower == "than" {
            return Some(Connective {
                first: j,
                last: j,
                compared_variant: false,
            });
        }
    }
    None
}

// `[more/less/-er ... than ...]` and the `compared to/with` connective.
fn try_ordered(
    sentence: &str,
    tokens: &[Token],
    head_idx: usize,
    entry: &LexiconEntry,
    lexicon: &Lexicon,
) -> Option<ComparativeMatch> {
    let connective = find_connective(tokens, head_idx)?;
    let first = phrase_start(tokens, head_idx, lexicon);
    let pattern_kind = match entry.surface.as_str() {
        "more" => PatternKind::MoreThan,
        "less" => PatternKind::LessThan,
        _ => PatternKind::ErThan,
    };

    // an adjacent compared-variant reads as one comparative phrase and
    // masks to a single placeholder
    let spans = if connective.compared_variant && connective.first == head_idx + 1 {
        vec![MaskSpan {
            start: tokens[first].core_start,
            end: tokens[connective.last].core_end,
            kind: SpanKind::ComparativePhrase,
        }]
    } else {
        vec![
            MaskSpan {
                start: tokens[first].core_start,
                end: tokens[head_idx].core_end,
                kind: SpanKind::ComparativePhrase,
            },
            MaskSpan {
                start: tokens[connective.first].core_start,
                end: tokens[connective.last].core_end,
                kind: SpanKind::Connective,
            },
        ]
    };
    Some(ComparativeMatch {
        sentence: sentence.to_string(),
        pattern_kind,
        direction: entry.direction,
        spans,
        head: tokens[head_idx].lower.clone(),
    })
}

/// One mined sentence paired with its background, in disentangled form.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImplicitEvidenceRecord {
    pub doc_id: String,
    pub background: String,
    pub e_ent: String,
    pub e_dis: String,
    pub r_text: String,
    pub label: String,
    pub direction: Direction,
    pub spans: Vec<MaskSpan>,
}

/// A matched sentence that could not be mapped to a vocabulary label.
#[derive(Debug, Clone, Serialize)]
pub struct RejectedSentence {
    pub doc_id: String,
    pub sentence: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct MinedDocument {
    pub records: Vec<ImplicitEvidenceRecord>,
    pub rejected: Vec<RejectedSentence>,
}

/// Mine one chunked abstract: run detection over the result/conclusion
/// sentences only, pair each match with the shared background, and
/// disentangle it. Statistics expressions are scrubbed before detection so
/// stored sentences, spans and placeholders all refer to the same text.
pub fn mine_document(
    chunked: &ChunkedAbstract,
    lexicon: &Lexicon,
    vocab: &LabelVocabulary,
    segmenter: &Segmenter,
) -> MinedDocument {
    let mut out = MinedDocument::default();
    for sentence in segmenter.segment(&chunked.result_conclusion) {
        let scrubbed = mask_functional_tokens(&sentence);
        let Some(m) = detect_comparative(&scrubbed, lexicon) else {
            continue;
        };
        match disentangle(&m, lexicon, vocab) {
            Ok(d) => out.records.push(ImplicitEvidenceRecord {
                doc_id: chunked.doc_id.clone(),
                background: chunked.background_method.clone(),
                e_ent: m.sentence.clone(),
                e_dis: d.e_dis,
                r_text: d.r_text,
                label: d.label,
                direction: m.direction,
                spans: m.spans.clone(),
            }),
            Err(reason) => out.rejected.push(RejectedSentence {
                doc_id: chunked.doc_id.clone(),
                sentence: m.sentence.clone(),
                reason,
            }),
        }
    }
    out
}

/// Chunk and mine a whole corpus, in document order.
pub fn mine_corpus(
    docs: &[crate::corpus::Document],
    lexicon: &Lexicon,
    vocab: &LabelVocabulary,
    map: &crate::corpus::SectionMap,
    segmenter: &Segmenter,
) -> (Vec<ImplicitEvidenceRecord>, Vec<RejectedSentence>) {
    let mined = exec::map_slice(docs, |doc| {
        let chunked = crate::corpus::chunk_abstract(doc, map, segmenter, |s| {
            detect_comparative(&mask_functional_tokens(s), lexicon).is_some()
        });
        mine_document(&chunked, lexicon, vocab, segmenter)
    });
    merge_mined(mined)
}

/// Sequential twin of [`mine_corpus`].
pub fn mine_corpus_seq(
    docs: &[crate::corpus::Document],
    lexicon: &Lexicon,
    vocab: &LabelVocabulary,
    map: &crate::corpus::SectionMap,
    segmenter: &Segmenter,
) -> (Vec<ImplicitEvidenceRecord>, Vec<RejectedSentence>) {
    let mined = exec::map_slice_seq(docs, |doc| {
        let chunked = crate::corpus::chunk_abstract(doc, map, segmenter, |s| {
            detect_comparative(&mask_functional_tokens(s), lexicon).is_some()
        });
        mine_document(&chunked, lexicon, vocab, segmenter)
    });
    merge_mined(mined)
}

fn merge_mined(mined: Vec<MinedDocument>) -> (Vec<ImplicitEvidenceRecord>, Vec<RejectedSentence>) {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for m in mined {
        records.extend(m.records);
        rejected.extend(m.rejected);
    }
    (records, rejected)
}

/// Direction distribution over mined records.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionStats {
    pub total: u64,
    /// Counts indexed sup, eq, inf.
    pub counts: [u64; 3],
    /// `None` when there are no records.
    pub fractions: Option<[f64; 3]>,
}

pub fn corpus_stats<'a, I>(records: I) -> DirectionStats
where
    I: IntoIterator<Item = &'a ImplicitEvidenceRecord>,
{
    let mut counts = [0u64; 3];
    for rec in records {
        counts[rec.direction.index()] += 1;
    }
    let total: u64 = counts.iter().sum();
    let fractions = if total > 0 {
        Some([
            counts[0] as f64 / total as f64,
            counts[1] as f64 / total as f64,
            counts[2] as f64 / total as f64,
        ])
    } else {
        None
    };
    DirectionStats {
        total,
        counts,
        fractions,
    }
}
