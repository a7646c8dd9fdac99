//! Dataset assembly: the word-level tokenizer, instance encoding with the
//! `[CLS] B [SEP] E [SEP]` layout, and pre-training dataset construction
//! with adversarial counterparts.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::make_adversarial_pretrain;
use crate::disentangle::LabelVocabulary;
use crate::error::{Error, Result};
use crate::mine::ImplicitEvidenceRecord;

/// Three-way trial result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultLabel {
    Up,
    Nodiff,
    Down,
}

impl ResultLabel {
    pub fn flip(self) -> ResultLabel {
        match self {
            ResultLabel::Up => ResultLabel::Down,
            ResultLabel::Down => ResultLabel::Up,
            ResultLabel::Nodiff => ResultLabel::Nodiff,
        }
    }

    pub fn index(self) -> usize {
        match self {
            ResultLabel::Up => 0,
            ResultLabel::Nodiff => 1,
            ResultLabel::Down => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<ResultLabel> {
        match i {
            0 => Some(ResultLabel::Up),
            1 => Some(ResultLabel::Nodiff),
            2 => Some(ResultLabel::Down),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResultLabel::Up => "up",
            ResultLabel::Nodiff => "nodiff",
            ResultLabel::Down => "down",
        }
    }

    pub fn parse(s: &str) -> Result<ResultLabel> {
        match s.trim().to_lowercase().as_str() {
            "up" => Ok(ResultLabel::Up),
            "nodiff" => Ok(ResultLabel::Nodiff),
            "down" => Ok(ResultLabel::Down),
            other => Err(Error::invalid("result label", other.to_string())),
        }
    }
}

/// A pre-training instance: background plus (possibly reversed) evidence.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PretrainInstance {
    pub background: String,
    pub evidence: String,
    pub label: String,
    pub adversarial: bool,
    pub source_id: String,
}

/// A fine-tuning instance for trial result prediction. The population is
/// optional; the benchmark format omits it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FinetuneInstance {
    pub background: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<String>,
    pub intervention: String,
    pub comparator: String,
    pub outcome: String,
    pub result: ResultLabel,
}

pub fn validate_finetune(inst: &FinetuneInstance) -> Result<()> {
    for (field, value) in [
        ("intervention", &inst.intervention),
        ("comparator", &inst.comparator),
        ("outcome", &inst.outcome),
    ] {
        if value.trim().is_empty() {
            return Err(Error::invalid("finetune instance", format!("empty {field}")));
        }
    }
    Ok(())
}

/// An encoded sequence: token ids, background/evidence segment ids, and the
/// class id (vocabulary label for pre-training, result for fine-tuning).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct EncodedInstance {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub label_id: u32,
    #[serde(default)]
    pub adversarial: bool,
}

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const STAT_ID: u32 = 5;

const SPECIALS: [&str; 6] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[STAT]"];

/// Lower-cased word-level tokenizer with six reserved special tokens at ids
/// 0 through 5. Bracketed specials are split out of surrounding punctuation
/// so `([STAT])` still yields the reserved id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tokenizer {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, u32>,
}

impl Tokenizer {
    /// Build a vocabulary from lines of text: the most frequent tokens with
    /// at least `min_freq` occurrences, capped at `max_vocab` entries
    /// including the specials. Ties break lexicographically.
    pub fn train<'a, I>(lines: I, max_vocab: usize, min_freq: u64) -> Result<Tokenizer>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if max_vocab < 100 {
            return Err(Error::invalid("tokenizer", "max_vocab must be at least 100"));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut any = false;
        for line in lines {
            for token in tokenize(line) {
                any = true;
                if SPECIALS.contains(&token.as_str()) {
                    continue;
                }
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::invalid("tokenizer", "empty corpus"));
        }
        let mut ranked: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_vocab.saturating_sub(SPECIALS.len()));

        let mut id_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(ranked.into_iter().map(|(t, _)| t));
        Ok(Tokenizer::from_tokens(id_to_token))
    }

    pub fn from_tokens(id_to_token: Vec<String>) -> Tokenizer {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Tokenizer {
            id_to_token,
            token_to_id,
        }
    }

    /// Rebuild the lookup map after deserialization.
    pub fn rehydrate(&mut self) {
        self.token_to_id = self
            .id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn vocab_size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        self.id_to_token
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or("[UNK]")
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }
}

/// Split text into lower-cased word tokens. Bracketed special tokens are
/// separated from adjacent punctuation and kept in canonical form.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut rest = word;
        while !rest.is_empty() {
            match find_special(rest) {
                Some((idx, special)) => {
                    if idx > 0 {
                        out.push(rest[..idx].to_lowercase());
                    }
                    out.push(special.to_string());
                    rest = &rest[idx + special.len()..];
                }
                None => {
                    out.push(rest.to_lowercase());
                    rest = "";
                }
            }
        }
    }
    out
}

fn find_special(s: &str) -> Option<(usize, &'static str)> {
    SPECIALS
        .iter()
        .filter_map(|sp| s.find(sp).map(|idx| (idx, *sp)))
        .min_by_key(|(idx, _)| *idx)
}

/// PICO elements available for the explicit-evidence layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PicoElement {
    Population,
    Intervention,
    Comparator,
    Outcome,
}

impl PicoElement {
    pub fn parse(s: &str) -> Result<PicoElement> {
        match s.trim().to_uppercase().as_str() {
            "P" | "POPULATION" => Ok(PicoElement::Population),
            "I" | "INTERVENTION" => Ok(PicoElement::Intervention),
            "C" | "COMPARATOR" => Ok(PicoElement::Comparator),
            "O" | "OUTCOME" => Ok(PicoElement::Outcome),
            other => Err(Error::invalid("pico element", other.to_string())),
        }
    }

    pub fn letter(self) -> char {
        match self {
            PicoElement::Population => 'P',
            PicoElement::Intervention => 'I',
            PicoElement::Comparator => 'C',
            PicoElement::Outcome => 'O',
        }
    }
}

/// Encoding controls: the element order of the explicit evidence, ablation
/// drops, and the per-region token budgets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub layout: Vec<PicoElement>,
    pub drop_background: bool,
    pub drop: Vec<PicoElement>,
    pub max_background_tokens: usize,
    pub max_evidence_tokens: usize,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            layout: vec![
                PicoElement::Intervention,
                PicoElement::Outcome,
                PicoElement::Comparator,
            ],
            drop_background: false,
            drop: Vec::new(),
            max_background_tokens: 256,
            max_evidence_tokens: 128,
        }
    }
}

impl EncodeOptions {
    /// Parse a layout string like `"I,O,C"`; duplicates are rejected.
    pub fn parse_layout(s: &str) -> Result<Vec<PicoElement>> {
        let layout: Vec<PicoElement> = s
            .split(',')
            .map(PicoElement::parse)
            .collect::<Result<_>>()?;
        for (i, a) in layout.iter().enumerate() {
            if layout[i + 1..].contains(a) {
                return Err(Error::invalid("layout", format!("duplicate element {}", a.letter())));
            }
        }
        Ok(layout)
    }
}

// Background keeps its tail: method details concentrate at the end.
fn truncate_background(mut ids: Vec<u32>, max: usize) -> Vec<u32> {
    if ids.len() > max {
        ids.drain(..ids.len() - max);
    }
    ids
}

// Evidence keeps its head.
fn truncate_evidence(mut ids: Vec<u32>, max: usize) -> Vec<u32> {
    ids.truncate(max);
    ids
}

fn assemble(background: Vec<u32>, evidence: Vec<u32>, label_id: u32, adversarial: bool) -> EncodedInstance {
    let mut token_ids = Vec::with_capacity(background.len() + evidence.len() + 3);
    token_ids.push(CLS_ID);
    token_ids.extend(&background);
    token_ids.push(SEP_ID);
    let boundary = token_ids.len();
    token_ids.extend(&evidence);
    token_ids.push(SEP_ID);

    let mut segment_ids = vec![0u8; boundary];
    segment_ids.resize(token_ids.len(), 1u8);
    EncodedInstance {
        token_ids,
        segment_ids,
        label_id,
        adversarial,
    }
}

/// Encode a pre-training instance as `[CLS] B [SEP] E [SEP]`.
pub fn encode_pretrain(
    tok: &Tokenizer,
    inst: &PretrainInstance,
    opts: &EncodeOptions,
    vocab: &LabelVocabulary,
) -> Result<EncodedInstance> {
    let background = if opts.drop_background {
        Vec::new()
    } else {
        truncate_background(tok.encode_text(&inst.background), opts.max_background_tokens)
    };
    let evidence = truncate_evidence(tok.encode_text(&inst.evidence), opts.max_evidence_tokens);
    let label_id = vocab.id(&inst.label)? as u32;
    Ok(assemble(background, evidence, label_id, inst.adversarial))
}

/// Encode a fine-tuning instance: evidence is the PICO elements in layout
/// order, separated by `[SEP]`.
pub fn encode_finetune(
    tok: &Tokenizer,
    inst: &FinetuneInstance,
    opts: &EncodeOptions,
) -> EncodedInstance {
    let background = if opts.drop_background {
        Vec::new()
    } else {
        truncate_background(tok.encode_text(&inst.background), opts.max_background_tokens)
    };
    let mut evidence: Vec<u32> = Vec::new();
    for element in &opts.layout {
        if opts.drop.contains(element) {
            continue;
        }
        let text = match element {
            PicoElement::Population => match &inst.population {
                Some(p) => p.as_str(),
                None => continue,
            },
            PicoElement::Intervention => inst.intervention.as_str(),
            PicoElement::Comparator => inst.comparator.as_str(),
            PicoElement::Outcome => inst.outcome.as_str(),
        };
        if !evidence.is_empty() {
            evidence.push(SEP_ID);
        }
        evidence.extend(tok.encode_text(text));
    }
    let evidence = truncate_evidence(evidence, opts.max_evidence_tokens);
    assemble(background, evidence, inst.result.index() as u32, false)
}

/// Deterministic holdout split: the last `fraction` of a seed-shuffled
/// index order. Returns (train, holdout) index lists.
pub fn split_holdout(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1101_d007);
    order.shuffle(&mut rng);
    let held = ((n as f64) * fraction).round() as usize;
    let holdout = order.split_off(n - held);
    (order, holdout)
}

/// Label histogram of a built dataset.
pub type LabelHistogram = BTreeMap<String, u64>;

/// Assemble the pre-training dataset: one instance per mined record plus
/// adversarial counterparts for a `ratio` share of records, shuffled with
/// the recorded seed.
pub fn build_pretrain_dataset(
    records: &[ImplicitEvidenceRecord],
    vocab: &LabelVocabulary,
    adversarial_ratio: f64,
    seed: u64,
) -> Result<(Vec<PretrainInstance>, LabelHistogram)> {
    if !(0.0..=1.0).contains(&adversarial_ratio) {
        return Err(Error::invalid(
            "adversarial ratio",
            format!("{adversarial_ratio} is outside [0, 1]"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut instances: Vec<PretrainInstance> = Vec::with_capacity(records.len() * 2);
    for (i, rec) in records.iter().enumerate() {
        instances.push(PretrainInstance {
            background: rec.background.clone(),
            evidence: rec.e_dis.clone(),
            label: rec.label.clone(),
            adversarial: false,
            source_id: format!("{}#{}", rec.doc_id, i),
        });
    }

    let n_adv = (records.len() as f64 * adversarial_ratio).round() as usize;
    let mut selection: Vec<usize> = (0..records.len()).collect();
    selection.shuffle(&mut rng);
    let mut selected: Vec<usize> = selection.into_iter().take(n_adv).collect();
    selected.sort_unstable();
    for i in selected {
        let source_id = format!("{}#{}", records[i].doc_id, i);
        let adv = make_adversarial_pretrain(&records[i], vocab, &source_id)?;
        instances.push(PretrainInstance {
            background: records[i].background.clone(),
            evidence: adv.e_rev,
            label: adv.label,
            adversarial: true,
            source_id: adv.source_id,
        });
    }

    instances.shuffle(&mut rng);

    let mut histogram = LabelHistogram::new();
    for inst in &instances {
        *histogram.entry(inst.label.clone()).or_insert(0) += 1;
    }
    Ok((instances, histogram))
}
