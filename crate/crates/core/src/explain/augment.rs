use std::collections::{BTreeMap, HashMap};

use super::{ExplainError, ExplanationRecord, Scenario};
use crate::schema::{EvidenceItem, VeracityLabel, VerificationExample};

/// Appends each claim's explanations for `scenario` as silver text evidence,
/// after the gold evidence and in label order. Claims without an explanation
/// are an error in strict mode and left as they are otherwise.
pub fn augment(
    examples: &[VerificationExample],
    records: &[ExplanationRecord],
    scenario: Scenario,
    strict: bool,
) -> Result<Vec<VerificationExample>, ExplainError> {
    let mut by_claim: HashMap<&str, BTreeMap<VeracityLabel, &str>> = HashMap::new();
    for r in records.iter().filter(|r| r.scenario == scenario) {
        by_claim.entry(&r.claim_id).or_default().insert(r.label, &r.text);
    }
    let mut missing = 0;
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        let mut ex = ex.clone();
        match by_claim.get(ex.id.as_str()) {
            Some(texts) => ex.evidence.extend(texts.values().map(|t| EvidenceItem::silver_text(*t))),
            None if strict => return Err(ExplainError::MissingExplanation { claim_id: ex.id, scenario }),
            None => missing += 1,
        }
        out.push(ex);
    }
    if missing > 0 {
        log::warn!("{missing} claims have no {scenario} explanation and were left unaugmented");
    }
    Ok(out)
}

pub fn strip_silver(examples: &[VerificationExample]) -> Vec<VerificationExample> {
    examples.iter().map(VerificationExample::without_silver).collect()
}
