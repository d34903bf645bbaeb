use sha2::{Digest, Sha256};

use super::ExplainError;
use crate::schema::VeracityLabel;

pub const SYSTEM_PROMPT: &str = "You are an AI assistant skilled in fact-checking. Your role is to generate justifications for relationships between claims and evidence. Analyze the information provided and explain why the evidence supports or refutes the claim based on the labeled relationship.";

const USER_TEMPLATE: &str = "Here is the information:

Claim: {claim}

Evidence: {evidence}

Relationship: {label}

# Task

Please generate a explanation that justifies the specified relationship between the claim and the evidence

# Requirements

- You should provide explanation without expressing the relationship explicitly.

- You should be concise and clear.

- The answer should be less than 100 words.";

pub(crate) const ZERO_SHOT_HEADER: &str = "Classify the relationship between the claim and the evidence.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Fills the template in one pass so placeholder-like text inside the claim
/// or evidence is never substituted again.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    'outer: while let Some(start) = rest.find('{') {
        for (key, value) in values {
            let tag = format!("{{{key}}}");
            if rest[start..].starts_with(&tag) {
                out.push_str(&rest[..start]);
                out.push_str(value);
                rest = &rest[start + tag.len()..];
                continue 'outer;
            }
        }
        out.push_str(&rest[..=start]);
        rest = &rest[start + 1..];
    }
    out.push_str(rest);
    out
}

pub fn build_prompt(claim: &str, evidence: &str, label: VeracityLabel) -> Result<Prompt, ExplainError> {
    if claim.trim().is_empty() {
        return Err(ExplainError::EmptyClaim);
    }
    Ok(Prompt {
        system: SYSTEM_PROMPT.to_string(),
        user: fill(USER_TEMPLATE, &[("claim", claim), ("evidence", evidence), ("label", label.word())]),
    })
}

/// Prompt asking the generator for its own verdict; used by the guided scenario.
pub fn zero_shot_prompt(claim: &str, evidence: &str) -> Result<Prompt, ExplainError> {
    if claim.trim().is_empty() {
        return Err(ExplainError::EmptyClaim);
    }
    let user = fill(
        "{header}\n\nClaim: {claim}\n\nEvidence: {evidence}\n\nAnswer with exactly one word: supported, refuted or nei.",
        &[("header", ZERO_SHOT_HEADER), ("claim", claim), ("evidence", evidence)],
    );
    Ok(Prompt { system: SYSTEM_PROMPT.to_string(), user })
}

pub fn prompt_hash(prompt: &Prompt) -> String {
    let mut h = Sha256::new();
    h.update(prompt.system.as_bytes());
    h.update([0u8]);
    h.update(prompt.user.as_bytes());
    hex::encode(h.finalize())
}

/// First label keyword in the reply, case-insensitive, on word boundaries.
pub fn parse_zero_shot(reply: &str) -> Option<VeracityLabel> {
    let lower = reply.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    for (i, w) in words.iter().enumerate() {
        match *w {
            "supported" | "supports" | "support" => return Some(VeracityLabel::Supported),
            "refuted" | "refutes" | "refute" => return Some(VeracityLabel::Refuted),
            "nei" => return Some(VeracityLabel::Nei),
            "not" if words.get(i + 1) == Some(&"enough") => return Some(VeracityLabel::Nei),
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitution_positions() {
        let p = build_prompt("A", "B", VeracityLabel::Supported).unwrap();
        assert!(p.user.contains("\n\nClaim: A\n\n"));
        assert!(p.user.contains("\n\nEvidence: B\n\n"));
        assert!(p.user.contains("\n\nRelationship: supported\n\n"));
        assert!(!p.user.ends_with('\n'));
    }

    #[test]
    fn braces_in_claim_are_literal() {
        let p = build_prompt("{evidence}", "x", VeracityLabel::Nei).unwrap();
        assert!(p.user.contains("Claim: {evidence}\n"));
    }

    #[test]
    fn empty_claim_rejected() {
        assert!(matches!(build_prompt("  ", "x", VeracityLabel::Nei), Err(ExplainError::EmptyClaim)));
    }

    #[test]
    fn zero_shot_parsing() {
        assert_eq!(parse_zero_shot("The claim is SUPPORTED."), Some(VeracityLabel::Supported));
        assert_eq!(parse_zero_shot("refuted"), Some(VeracityLabel::Refuted));
        assert_eq!(parse_zero_shot("There is not enough information."), Some(VeracityLabel::Nei));
        assert_eq!(parse_zero_shot("Refuted, not supported"), Some(VeracityLabel::Refuted));
        assert_eq!(parse_zero_shot("neither here nor there"), None);
        assert_eq!(parse_zero_shot("%%%"), None);
    }
}
