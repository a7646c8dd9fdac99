//! Adversarial instance generation: mask-delimited segment reversal with
//! label reversal for pre-training, and intervention/comparator swap with
//! result reversal for fine-tuning.

use crate::corpus::normalize_ws;
use crate::dataset::FinetuneInstance;
use crate::disentangle::{LabelVocabulary, PLACEHOLDER};
use crate::error::{Error, Result};
use crate::mine::ImplicitEvidenceRecord;

/// A reversed pre-training instance.
#[derive(Debug, Clone)]
pub struct AdversarialEvidence {
    pub e_rev: String,
    pub label: String,
    pub source_id: String,
}

/// Reverse the order of the segments between placeholders while keeping the
/// word order inside each segment.
///
/// The promoted segment gets its first alphabetic character upper-cased and
/// the demoted one lower-cased, unless the leading token looks like an
/// acronym (two or more uppercase letters). A terminal period stays
/// terminal. Errors when there is no placeholder to pivot on.
pub fn reverse_evidence(e_dis: &str) -> Result<String> {
    if !e_dis.contains(PLACEHOLDER) {
        return Err(Error::invalid(
            "evidence",
            "no placeholder to pivot the reversal on",
        ));
    }
    let normalized = normalize_ws(e_dis);
    let (body, terminal_period) = match normalized.strip_suffix('.') {
        Some(rest) => (rest, true),
        None => (normalized.as_str(), false),
    };

    let mut segments: Vec<String> = body.split(PLACEHOLDER).map(|s| s.trim().to_string()).collect();
    segments.reverse();
    let last = segments.len() - 1;
    if !segments[0].is_empty() {
        segments[0] = set_leading_case(&segments[0], true);
    }
    if !segments[last].is_empty() {
        segments[last] = set_leading_case(&segments[last], false);
    }

    let mut out = normalize_ws(&segments.join(&format!(" {PLACEHOLDER} ")));
    if terminal_period {
        out.push('.');
    }
    Ok(out)
}

// Case-swap the first alphabetic character of the first token; tokens with
// two or more uppercase letters are left alone.
fn set_leading_case(segment: &str, upper: bool) -> String {
    let first_token = segment.split_whitespace().next().unwrap_or("");
    let uppercase_count = first_token.chars().filter(|c| c.is_uppercase()).count();
    if uppercase_count >= 2 {
        return segment.to_string();
    }
    let Some((idx, ch)) = segment.char_indices().find(|(_, c)| c.is_alphabetic()) else {
        return segment.to_string();
    };
    let replacement: String = if upper {
        ch.to_uppercase().collect()
    } else {
        ch.to_lowercase().collect()
    };
    let mut out = String::with_capacity(segment.len());
    out.push_str(&segment[..idx]);
    out.push_str(&replacement);
    out.push_str(&segment[idx + ch.len_utf8()..]);
    out
}

/// Build the adversarial counterpart of a mined record: reversed evidence
/// with the antonym label. The background is untouched.
pub fn make_adversarial_pretrain(
    record: &ImplicitEvidenceRecord,
    vocab: &LabelVocabulary,
    source_id: &str,
) -> Result<AdversarialEvidence> {
    let e_rev = reverse_evidence(&record.e_dis)?;
    let label = vocab.rev(&record.label)?.to_string();
    Ok(AdversarialEvidence {
        e_rev,
        label,
        source_id: source_id.to_string(),
    })
}

/// Swap intervention and comparator and reverse the result direction;
/// background, population and outcome are unchanged. An involution.
pub fn make_adversarial_finetune(instance: &FinetuneInstance) -> FinetuneInstance {
    FinetuneInstance {
        background: instance.background.clone(),
        population: instance.population.clone(),
        intervention: instance.comparator.clone(),
        comparator: instance.intervention.clone(),
        outcome: instance.outcome.clone(),
        result: instance.result.flip(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ResultLabel;
    use crate::mine::Direction;

    #[test]
    fn reversal_matches_worked_example() {
        let e_dis = "Levels of viral antigen staining in lung sections of GS-5734-treated \
                     animals were [MASK] vehicle-treated animals.";
        let e_rev = reverse_evidence(e_dis).unwrap();
        assert_eq!(
            e_rev,
            "Vehicle-treated animals [MASK] levels of viral antigen staining in lung \
             sections of GS-5734-treated animals were."
        );
    }

    #[test]
    fn double_reversal_is_identity() {
        let cases = [
            "Serum TSH levels were [MASK] in the chloroquine group [MASK] in the placebo group.",
            "Overall mortality was [MASK] in the alfa arm [MASK] in the beta arm.",
            "Recovery [MASK] vehicle-treated controls.",
        ];
        for e_dis in cases {
            let twice = reverse_evidence(&reverse_evidence(e_dis).unwrap()).unwrap();
            assert_eq!(twice, e_dis, "double reversal drifted for {e_dis:?}");
        }
    }

    #[test]
    fn acronym_guard_keeps_case() {
        let e_dis = "GS-5734 treated animals were [MASK] controls.";
        let e_rev = reverse_evidence(e_dis).unwrap();
        // demoted segment starts with an acronym-like token and keeps it
        assert_eq!(e_rev, "Controls [MASK] GS-5734 treated animals were.");
    }

    #[test]
    fn trailing_placeholder_degenerate_split() {
        let e_rev = reverse_evidence("The outcome was [MASK]").unwrap();
        assert_eq!(e_rev, "[MASK] the outcome was");
        let back = reverse_evidence(&e_rev).unwrap();
        assert_eq!(back, "The outcome was [MASK]");
    }

    #[test]
    fn no_placeholder_is_an_error() {
        assert!(reverse_evidence("nothing to pivot on").is_err());
    }

    #[test]
    fn segment_multiset_is_conserved() {
        let e_dis = "Alpha scores were [MASK] in group one [MASK] in group two.";
        let e_rev = reverse_evidence(e_dis).unwrap();
        let norm = |s: &str| {
            let mut v: Vec<String> = s
                .trim_end_matches('.')
                .split(PLACEHOLDER)
                .map(|seg| seg.trim().to_lowercase())
                .collect();
            v.sort();
            v
        };
        assert_eq!(norm(e_dis), norm(&e_rev));
    }

    #[test]
    fn adversarial_pretrain_label_law() {
        let vocab = LabelVocabulary::default();
        let record = ImplicitEvidenceRecord {
            doc_id: "d".into(),
            background: "b".into(),
            e_ent: "x was lower than y.".into(),
            e_dis: "x was [MASK] [MASK] y.".into(),
            r_text: "lower ... than".into(),
            label: "[LOWER]".into(),
            direction: Direction::Inf,
            spans: vec![],
        };
        let adv = make_adversarial_pretrain(&record, &vocab, "d#0").unwrap();
        assert_eq!(adv.label, "[HIGHER]");
        assert_eq!(
            vocab.direction(&adv.label).unwrap(),
            record.direction.flip()
        );

        let nodiff = ImplicitEvidenceRecord {
            label: "[NODIFF]".into(),
            direction: Direction::Eq,
            ..record
        };
        let adv = make_adversarial_pretrain(&nodiff, &vocab, "d#0").unwrap();
        assert_eq!(adv.label, "[NODIFF]");
    }

    #[test]
    fn finetune_swap_is_an_involution() {
        let inst = FinetuneInstance {
            background: "bg".into(),
            population: Some("adults".into()),
            intervention: "drug".into(),
            comparator: "placebo".into(),
            outcome: "mortality".into(),
            result: ResultLabel::Up,
        };
        let adv = make_adversarial_finetune(&inst);
        assert_eq!(adv.intervention, "placebo");
        assert_eq!(adv.comparator, "drug");
        assert_eq!(adv.result, ResultLabel::Down);
        assert_eq!(make_adversarial_finetune(&adv), inst);

        let nodiff = FinetuneInstance {
            result: ResultLabel::Nodiff,
            ..inst
        };
        assert_eq!(make_adversarial_finetune(&nodiff).result, ResultLabel::Nodiff);
    }
}
