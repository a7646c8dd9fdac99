//! Deterministic synthetic corpus generation for desk-scale validation.
//!
//! Each document carries exactly one comparative sentence built from
//! parameterized templates, with the gold label, spans and disentangled form
//! emitted alongside. A latent per-drug potency table (shared through
//! `world_seed`) decides comparison directions, so the same world also
//! yields consistent fine-tuning instances for transfer experiments.
//! Negative trap sentences exercise the `-er` lookalike guards.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Section};
use crate::dataset::{FinetuneInstance, ResultLabel};
use crate::disentangle::PLACEHOLDER;
use crate::exec;
use crate::mine::{Direction, MaskSpan, SpanKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_docs: usize,
    /// Seed of the latent potency world; corpora and fine-tune sets sharing
    /// it agree on every comparison direction.
    pub world_seed: u64,
    pub n_interventions: usize,
    /// Potency gap below which a pair reads as "no difference".
    pub eq_band: f64,
    pub trap_rate: f64,
    pub named_section_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_docs: 100,
            world_seed: 42,
            n_interventions: 12,
            eq_band: 0.14,
            trap_rate: 0.35,
            named_section_rate: 0.5,
        }
    }
}

/// Gold annotation for one generated document: the mined-record fields plus
/// the latent intervention/comparator/outcome triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldRecord {
    pub doc_id: String,
    pub background: String,
    pub e_ent: String,
    pub e_dis: String,
    pub r_text: String,
    pub label: String,
    pub direction: Direction,
    pub spans: Vec<MaskSpan>,
    pub intervention: String,
    pub comparator: String,
    pub outcome: String,
    pub result: ResultLabel,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub documents: Vec<Document>,
    pub gold: Vec<GoldRecord>,
}

const DRUGS: [&str; 24] = [
    "alfatrexin",
    "betamorin",
    "carvolene",
    "dexapril",
    "elotazine",
    "favirine",
    "gemotrix",
    "halcinate",
    "ibuterol",
    "jasporin",
    "kelarone",
    "lomivir",
    "meproline",
    "neximab",
    "orvantin",
    "pexolide",
    "quibristat",
    "rolapene",
    "sorvustat",
    "tivantrel",
    "ultracine",
    "vopremab",
    "welfoxin",
    "xanorine",
];

const CONDITIONS: [&str; 6] = [
    "bronchial syndrome",
    "viral pneumonia",
    "refractory hypertension",
    "metabolic disorder",
    "postoperative infection",
    "seasonal influenza",
];

const GROUP_NOUNS: [&str; 3] = ["group", "arm", "cohort"];
const MODIFIERS: [&str; 3] = ["slightly", "significantly", "markedly"];

const TRAPS: [&str; 12] = [
    "The other investigators used a different protocol.",
    "We asked whether the treatment helped rather than harmed.",
    "Patients were monitored after discharge for safety signals.",
    "Whether these findings generalize remains unclear.",
    "Samples were collected after the final dose.",
    "The other arm followed standard care procedures.",
    "Adherence was assessed rather than assumed.",
    "Follow-up visits occurred after week twelve.",
    "Together, these data informed the analysis plan.",
    "Either regimen could be administered at home.",
    "Rather than excluding dropouts, we used intention-to-treat analysis.",
    "Observers were blinded throughout the study period.",
];

struct OutcomeSpec {
    subject: &'static str,
    verb: &'static str,
    o_text: &'static str,
    sup_word: &'static str,
    sup_label: &'static str,
    inf_word: &'static str,
    inf_label: &'static str,
    /// Adjective carried by the free degree heads "more"/"less".
    adjective: Option<&'static str>,
    /// Equality phrasing: `no difference between ... and` when true,
    /// `similar/comparable to` otherwise.
    eq_nodiff: bool,
}

const OUTCOMES: [OutcomeSpec; 16] = [
    OutcomeSpec { subject: "overall mortality", verb: "was", o_text: "overall mortality", sup_word: "higher", sup_label: "[HIGHER]", inf_word: "lower", inf_label: "[LOWER]", adjective: None, eq_nodiff: true },
    OutcomeSpec { subject: "effect size", verb: "was", o_text: "effect size", sup_word: "greater", sup_label: "[GREATER]", inf_word: "smaller", inf_label: "[SMALLER]", adjective: None, eq_nodiff: false },
    OutcomeSpec { subject: "adverse events", verb: "were", o_text: "event frequency", sup_word: "more", sup_label: "[MORE]", inf_word: "less", inf_label: "[LESS]", adjective: Some("frequent"), eq_nodiff: true },
    OutcomeSpec { subject: "glycemic control", verb: "was", o_text: "glycemic control", sup_word: "better", sup_label: "[BETTER]", inf_word: "poorer", inf_label: "[POORER]", adjective: None, eq_nodiff: false },
    OutcomeSpec { subject: "hospital stay", verb: "was", o_text: "stay duration", sup_word: "longer", sup_label: "[LONGER]", inf_word: "shorter", inf_label: "[SHORTER]", adjective: None, eq_nodiff: true },
    OutcomeSpec { subject: "clinical recovery", verb: "was", o_text: "recovery speed", sup_word: "faster", sup_label: "[FASTER]", inf_word: "slower", inf_label: "[SLOWER]", adjective: None, eq_nodiff: false },
    OutcomeSpec { subject: "antibody responses", verb: "were", o_text: "antibody response", sup_word: "stronger", sup_label: "[STRONGER]", inf_word: "weaker", inf_label: "[WEAKER]", adjective: None, eq_nodiff: true },
    OutcomeSpec { subject: "symptom resolution", verb: "was", o_text: "resolution timing", sup_word: "later", sup_label: "[LATER]", inf_word: "earlier", inf_label: "[EARLIER]", adjective: None, eq_nodiff: false },
    OutcomeSpec { subject: "study participants", verb: "were", o_text: "participant age", sup_word: "older", sup_label: "[OLDER]", inf_word: "younger", inf_label: "[YOUNGER]", adjective: None, eq_nodiff: true },
    OutcomeSpec { subject: "study animals", verb: "were", o_text: "body weight", sup_word: "heavier", sup_label: "[HEAVIER]", inf_word: "lighter", inf_label: "[LIGHTER]", adjective: None, eq_nodiff: false },
    OutcomeSpec { subject: "treated vessels", verb: "were", o_text: "vessel diameter", sup_word: "wider", sup_label: "[WIDER]", inf_word: "narrower", inf_label: "[NARROWER]", adjective: None, eq_nodiff: true },
    OutcomeSpec { subject: "ventricular walls", verb: "were", o_text: "wall thickness", sup_word: "thicker", sup_label: "[THICKER]", inf_word: "thinner", inf_label: "[THINNER]", adjective: None, eq_nodiff: false },
    OutcomeSpec { subject: "sedation depth", verb: "was", o_text: "sedation depth", sup_word: "deeper", sup_label: "[DEEPER]", inf_word: "shallower", inf_label: "[SHALLOWER]", adjective: None, eq_nodiff: true },
    OutcomeSpec { subject: "functional outcomes", verb: "were", o_text: "outcome scores", sup_word: "superior", sup_label: "[SUPERIOR]", inf_word: "inferior", inf_label: "[INFERIOR]", adjective: None, eq_nodiff: false },
    OutcomeSpec { subject: "dosing regimens", verb: "were", o_text: "safety profile", sup_word: "safer", sup_label: "[SAFER]", inf_word: "riskier", inf_label: "[RISKIER]", adjective: None, eq_nodiff: true },
    OutcomeSpec { subject: "infarct size", verb: "was", o_text: "infarct size", sup_word: "larger", sup_label: "[LARGER]", inf_word: "lesser", inf_label: "[LESSER]", adjective: None, eq_nodiff: false },
];

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn doc_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index as u64 + 1)))
}

/// Latent drug potencies shared across corpora with the same `world_seed`.
fn potency_table(config: &SynthConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.world_seed);
    (0..config.n_interventions.min(DRUGS.len()))
        .map(|_| rng.random::<f64>())
        .collect()
}

fn direction_for(potency: &[f64], i: usize, c: usize, eq_band: f64) -> Direction {
    let diff = potency[i] - potency[c];
    if diff.abs() < eq_band {
        Direction::Eq
    } else if diff > 0.0 {
        Direction::Sup
    } else {
        Direction::Inf
    }
}

// Builds a sentence and its masked twin simultaneously, recording exact
// byte spans for the masked pieces.
struct SentenceBuilder {
    text: String,
    masked: String,
    spans: Vec<MaskSpan>,
    r_parts: Vec<String>,
}

impl SentenceBuilder {
    fn new() -> Self {
        SentenceBuilder {
            text: String::new(),
            masked: String::new(),
            spans: Vec::new(),
            r_parts: Vec::new(),
        }
    }

    fn push(&mut self, s: &str) {
        self.text.push_str(s);
        self.masked.push_str(s);
    }

    fn push_masked(&mut self, s: &str, kind: SpanKind) {
        let start = self.text.len();
        self.text.push_str(s);
        self.spans.push(MaskSpan {
            start,
            end: self.text.len(),
            kind,
        });
        self.masked.push_str(PLACEHOLDER);
        self.r_parts.push(s.to_string());
    }

    fn capitalize_start(&mut self) {
        if let Some(first) = self.text.chars().next() {
            let upper: String = first.to_uppercase().collect();
            self.text.replace_range(..first.len_utf8(), &upper);
        }
        if let Some(first) = self.masked.chars().next() {
            let upper: String = first.to_uppercase().collect();
            self.masked.replace_range(..first.len_utf8(), &upper);
        }
    }
}

struct BuiltEvidence {
    e_ent: String,
    e_dis: String,
    spans: Vec<MaskSpan>,
    r_text: String,
    label: String,
}

fn build_evidence(
    spec: &OutcomeSpec,
    i_drug: &str,
    c_drug: &str,
    direction: Direction,
    rng: &mut ChaCha8Rng,
) -> BuiltEvidence {
    let group = *GROUP_NOUNS.choose(rng).unwrap();
    let mut b = SentenceBuilder::new();
    let label;

    match direction {
        Direction::Sup | Direction::Inf => {
            let (word, lbl) = if direction == Direction::Sup {
                (spec.sup_word, spec.sup_label)
            } else {
                (spec.inf_word, spec.inf_label)
            };
            label = lbl.to_string();
            let phrase = format!("{} {}", MODIFIERS.choose(rng).unwrap(), word);
            // superlative-free heads that do not combine with "than"
            let separated_connective = word == "superior" || word == "inferior";
            let adjacent_compared = rng.random_bool(0.4);
            if adjacent_compared {
                // "{Subject} in the I group {verb} {phrase}[ adj] as compared to the C group."
                b.push(&format!("{} in the {} {} {} ", spec.subject, i_drug, group, spec.verb));
                match spec.adjective {
                    Some(adj) => {
                        b.push_masked(&phrase, SpanKind::ComparativePhrase);
                        b.push(&format!(" {adj} "));
                        b.push_masked("as compared to", SpanKind::Connective);
                    }
                    None => {
                        b.push_masked(
                            &format!("{phrase} as compared to"),
                            SpanKind::ComparativePhrase,
                        );
                    }
                }
                b.push(&format!(" the {} {}.", c_drug, group));
            } else {
                // "{Subject} {verb} {phrase}[ adj] in the I group than in the C group."
                b.push(&format!("{} {} ", spec.subject, spec.verb));
                b.push_masked(&phrase, SpanKind::ComparativePhrase);
                if let Some(adj) = spec.adjective {
                    b.push(&format!(" {adj}"));
                }
                b.push(&format!(" in the {} {} ", i_drug, group));
                if separated_connective {
                    b.push_masked("compared with", SpanKind::Connective);
                } else {
                    b.push_masked("than", SpanKind::Connective);
                }
                b.push(&format!(" in the {} {}.", c_drug, group));
            }
        }
        Direction::Eq => {
            if spec.eq_nodiff {
                label = "[NODIFF]".to_string();
                let phrase = if rng.random_bool(0.5) {
                    "no difference between"
                } else {
                    "no significant difference between"
                };
                b.push("there was ");
                b.push_masked(phrase, SpanKind::ComparativePhrase);
                b.push(&format!(" the {} {} ", i_drug, group));
                b.push_masked("and", SpanKind::Connective);
                b.push(&format!(
                    " the {} {} in terms of {}.",
                    c_drug, group, spec.o_text
                ));
            } else {
                label = "[SIMILAR]".to_string();
                let head = if rng.random_bool(0.5) { "similar" } else { "comparable" };
                b.push(&format!(
                    "{} in the {} {} {} ",
                    spec.subject, i_drug, group, spec.verb
                ));
                b.push_masked(head, SpanKind::ComparativePhrase);
                b.push(" ");
                b.push_masked("to", SpanKind::Connective);
                b.push(&format!(" that in the {} {}.", c_drug, group));
            }
        }
    }
    b.capitalize_start();
    BuiltEvidence {
        r_text: b.r_parts.join(" ... "),
        e_ent: b.text,
        e_dis: b.masked,
        spans: b.spans,
        label,
    }
}

// Drug-free by design, and every template is exactly ten words: the
// evidence segment is the only place the latent pair order shows up, and
// its tokens sit at template-determined positions.
fn background_sentences(o_text: &str, rng: &mut ChaCha8Rng) -> Vec<String> {
    let condition = *CONDITIONS.choose(rng).unwrap();
    let n = 80 + 20 * rng.random_range(0..20u32);
    let weeks = 4 + rng.random_range(0..21u32);
    let pool = [
        format!("A total of {n} patients with {condition} were enrolled."),
        format!("Patients with {condition} received study treatment for {weeks} weeks."),
        format!("The trial evaluated {o_text} in adults with {condition}."),
    ];
    let pick = rng.random_range(0..pool.len());
    vec![pool[pick].clone()]
}

fn build_doc(config: &SynthConfig, potency: &[f64], index: usize) -> (Document, GoldRecord) {
    let mut rng = doc_rng(config.seed, index);
    let n_drugs = potency.len();

    let a = rng.random_range(0..n_drugs);
    let mut b = rng.random_range(0..n_drugs - 1);
    if b >= a {
        b += 1;
    }
    // canonical order: intervention is the lower index, so original corpora
    // present each pair one way and reversals come only from the
    // adversarial generator
    let (i_idx, c_idx) = (a.min(b), a.max(b));
    let i_drug = DRUGS[i_idx];
    let c_drug = DRUGS[c_idx];
    let outcome_idx = rng.random_range(0..OUTCOMES.len());
    let spec = &OUTCOMES[outcome_idx];
    let direction = direction_for(potency, i_idx, c_idx, config.eq_band);

    let evidence = build_evidence(spec, i_drug, c_drug, direction, &mut rng);
    let background = background_sentences(spec.o_text, &mut rng);

    let mut result_tail: Vec<String> = Vec::new();
    if rng.random_bool(config.trap_rate) {
        result_tail.push(TRAPS.choose(&mut rng).unwrap().to_string());
    }

    let doc_id = format!("synth-{index:06}");
    let named = rng.random_bool(config.named_section_rate);
    let mut result_text = vec![evidence.e_ent.clone()];
    result_text.extend(result_tail);

    let sections = if named {
        let bg_name = ["BACKGROUND", "INTRODUCTION", "METHODS"].choose(&mut rng).unwrap();
        let res_name = ["RESULTS", "FINDINGS"].choose(&mut rng).unwrap();
        let mut sections = vec![
            Section {
                name: Some(bg_name.to_string()),
                text: background.join(" "),
            },
            Section {
                name: Some(res_name.to_string()),
                text: result_text.join(" "),
            },
        ];
        if rng.random_bool(0.3) {
            sections.push(Section {
                name: Some("CONCLUSIONS".to_string()),
                text: "Further studies are warranted.".to_string(),
            });
        }
        sections
    } else {
        let mut all = background.clone();
        all.extend(result_text);
        vec![Section {
            name: None,
            text: all.join(" "),
        }]
    };

    let doc = Document {
        id: doc_id.clone(),
        title: format!("{} versus {} for {}", i_drug, c_drug, spec.o_text),
        sections,
    };
    let gold = GoldRecord {
        doc_id,
        background: background.join(" "),
        e_ent: evidence.e_ent,
        e_dis: evidence.e_dis,
        r_text: evidence.r_text,
        label: evidence.label,
        direction,
        spans: evidence.spans,
        intervention: i_drug.to_string(),
        comparator: c_drug.to_string(),
        outcome: spec.o_text.to_string(),
        result: match direction {
            Direction::Sup => ResultLabel::Up,
            Direction::Eq => ResultLabel::Nodiff,
            Direction::Inf => ResultLabel::Down,
        },
    };
    (doc, gold)
}

/// Generate `n_docs` templated abstracts with gold records, deterministically
/// from the config seeds.
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let potency = potency_table(config);
    let pairs = exec::map_range(config.n_docs, |i| build_doc(config, &potency, i));
    let mut documents = Vec::with_capacity(pairs.len());
    let mut gold = Vec::with_capacity(pairs.len());
    for (doc, g) in pairs {
        documents.push(doc);
        gold.push(g);
    }
    SynthCorpus { documents, gold }
}

/// Exact expected label distribution under the config: enumeration over all
/// canonical drug pairs and outcomes, which is how documents are sampled.
pub fn expected_label_mixture(config: &SynthConfig) -> std::collections::BTreeMap<String, f64> {
    let potency = potency_table(config);
    let n = potency.len();
    let mut mixture = std::collections::BTreeMap::new();
    let mut total = 0u64;
    for i in 0..n {
        for c in i + 1..n {
            let dir = direction_for(&potency, i, c, config.eq_band);
            for spec in &OUTCOMES {
                let label = match dir {
                    Direction::Sup => spec.sup_label,
                    Direction::Inf => spec.inf_label,
                    Direction::Eq => {
                        if spec.eq_nodiff {
                            "[NODIFF]"
                        } else {
                            "[SIMILAR]"
                        }
                    }
                };
                *mixture.entry(label.to_string()).or_insert(0.0) += 1.0;
                total += 1;
            }
        }
    }
    for v in mixture.values_mut() {
        *v /= total as f64;
    }
    mixture
}

/// Generate fine-tuning instances from the same latent world.
pub fn generate_finetune(config: &SynthConfig, seed: u64, n: usize) -> Vec<FinetuneInstance> {
    let potency = potency_table(config);
    exec::map_range(n, |i| {
        let mut rng = doc_rng(seed, i);
        let n_drugs = potency.len();
        let a = rng.random_range(0..n_drugs);
        let mut b = rng.random_range(0..n_drugs - 1);
        if b >= a {
            b += 1;
        }
        let (i_idx, c_idx) = (a.min(b), a.max(b));
        let spec = &OUTCOMES[rng.random_range(0..OUTCOMES.len())];
        let direction = direction_for(&potency, i_idx, c_idx, config.eq_band);
        let background = background_sentences(spec.o_text, &mut rng);
        FinetuneInstance {
            background: background.join(" "),
            population: None,
            intervention: format!("in the {} group", DRUGS[i_idx]),
            comparator: format!("in the {} group", DRUGS[c_idx]),
            outcome: spec.o_text.to_string(),
            result: match direction {
                Direction::Sup => ResultLabel::Up,
                Direction::Eq => ResultLabel::Nodiff,
                Direction::Inf => ResultLabel::Down,
            },
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SectionMap, Segmenter};
    use crate::disentangle::LabelVocabulary;
    use crate::mine::{mine_corpus, Lexicon};

    #[test]
    fn generation_is_deterministic() {
        let config = SynthConfig {
            n_docs: 50,
            ..SynthConfig::default()
        };
        let a = generate(&config);
        let b = generate(&config);
        assert_eq!(a.documents, b.documents);
        assert_eq!(a.gold.len(), 50);
        for (doc, gold) in a.gold.iter().zip(&b.gold) {
            assert_eq!(doc.e_ent, gold.e_ent);
            assert_eq!(doc.spans, gold.spans);
        }
    }

    #[test]
    fn one_gold_comparative_per_document() {
        let config = SynthConfig {
            n_docs: 40,
            ..SynthConfig::default()
        };
        let corpus = generate(&config);
        assert_eq!(corpus.documents.len(), corpus.gold.len());
        for gold in &corpus.gold {
            assert!(gold.e_dis.contains(PLACEHOLDER));
            assert!(!gold.spans.is_empty());
        }
    }

    #[test]
    fn gold_spans_reconstruct_the_sentence() {
        let config = SynthConfig {
            n_docs: 120,
            ..SynthConfig::default()
        };
        let corpus = generate(&config);
        for gold in &corpus.gold {
            let mut restored = gold.e_dis.clone();
            for span in &gold.spans {
                restored =
                    restored.replacen(PLACEHOLDER, &gold.e_ent[span.start..span.end], 1);
            }
            assert_eq!(restored, gold.e_ent, "doc {}", gold.doc_id);
        }
    }

    #[test]
    fn mining_small_corpus_reproduces_gold() {
        let config = SynthConfig {
            n_docs: 80,
            ..SynthConfig::default()
        };
        let corpus = generate(&config);
        let (records, rejected) = mine_corpus(
            &corpus.documents,
            &Lexicon::default(),
            &LabelVocabulary::default(),
            &SectionMap::default(),
            &Segmenter::default(),
        );
        assert!(rejected.is_empty());
        assert_eq!(records.len(), corpus.gold.len());
        for (rec, gold) in records.iter().zip(&corpus.gold) {
            assert_eq!(rec.doc_id, gold.doc_id);
            assert_eq!(rec.e_ent, gold.e_ent, "doc {}", gold.doc_id);
            assert_eq!(rec.e_dis, gold.e_dis, "doc {}", gold.doc_id);
            assert_eq!(rec.label, gold.label, "doc {}", gold.doc_id);
            assert_eq!(rec.spans, gold.spans, "doc {}", gold.doc_id);
            assert_eq!(rec.background, gold.background, "doc {}", gold.doc_id);
            assert_eq!(rec.r_text, gold.r_text, "doc {}", gold.doc_id);
            assert_eq!(rec.direction, gold.direction, "doc {}", gold.doc_id);
        }
    }

    #[test]
    fn finetune_world_is_consistent_with_corpus() {
        let config = SynthConfig::default();
        let instances = generate_finetune(&config, 11, 60);
        assert_eq!(instances.len(), 60);
        let potency = potency_table(&config);
        for inst in &instances {
            let i_idx = DRUGS.iter().position(|d| inst.intervention.contains(d)).unwrap();
            let c_idx = DRUGS.iter().position(|d| inst.comparator.contains(d)).unwrap();
            let dir = direction_for(&potency, i_idx, c_idx, config.eq_band);
            let expect = match dir {
                Direction::Sup => ResultLabel::Up,
                Direction::Eq => ResultLabel::Nodiff,
                Direction::Inf => ResultLabel::Down,
            };
            assert_eq!(inst.result, expect);
        }
    }

    #[test]
    fn mixture_sums_to_one() {
        let mixture = expected_label_mixture(&SynthConfig::default());
        let sum: f64 = mixture.values().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(mixture.len() <= 34);
    }
}
