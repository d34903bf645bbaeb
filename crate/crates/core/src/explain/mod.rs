//! Explanation generation: picking the label an explanation is conditioned
//! on, prompting an LLM, caching replies and appending them as silver evidence.

pub mod augment;
pub mod client;
pub mod generate;
pub mod prompt;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{EvidenceItem, VeracityLabel, VerificationExample};

pub use augment::{augment, strip_silver};
pub use client::{ClientError, FlakyClient, LlmClient, OpenAiClient, StubClient};
pub use generate::{ExplanationCache, ExplanationRequest, GenerateConfig, GenerateStats, Session};
pub use prompt::{build_prompt, parse_zero_shot, prompt_hash, zero_shot_prompt, Prompt, SYSTEM_PROMPT};

pub const WORD_LIMIT: usize = 100;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("scenario {scenario} needs the gold label of claim {claim_id}")]
    MissingGold { claim_id: String, scenario: Scenario },
    #[error("guided scenario needs a zero-shot prediction for claim {0}")]
    MissingZeroShot(String),
    #[error("claim text is empty")]
    EmptyClaim,
    #[error("LLM request failed after {attempts} attempts: {message}")]
    Client { attempts: u32, message: String },
    #[error("request budget of {budget} exceeded ({needed} uncached requests pending)")]
    BudgetExceeded { budget: usize, needed: usize },
    #[error("no {scenario} explanation for claim {claim_id}")]
    MissingExplanation { claim_id: String, scenario: Scenario },
    #[error("explanation cache: {0}")]
    Cache(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Oracle,
    Opposite,
    Random,
    All,
    AlwaysSupports,
    AlwaysRefutes,
    AlwaysNei,
    Guided,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Self::Oracle,
        Self::Opposite,
        Self::Random,
        Self::All,
        Self::AlwaysSupports,
        Self::AlwaysRefutes,
        Self::AlwaysNei,
        Self::Guided,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Opposite => "opposite",
            Self::Random => "random",
            Self::All => "all",
            Self::AlwaysSupports => "always_supports",
            Self::AlwaysRefutes => "always_refutes",
            Self::AlwaysNei => "always_nei",
            Self::Guided => "guided",
        }
    }

    /// Row label used in result tables ("Always Supports").
    pub fn title(self) -> &'static str {
        match self {
            Self::Oracle => "Oracle",
            Self::Opposite => "Opposite",
            Self::Random => "Random",
            Self::All => "All",
            Self::AlwaysSupports => "Always Supports",
            Self::AlwaysRefutes => "Always Refutes",
            Self::AlwaysNei => "Always NEI",
            Self::Guided => "Guided",
        }
    }

    pub fn needs_gold(self) -> bool {
        matches!(self, Self::Oracle | Self::Opposite)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Self::ALL
            .into_iter()
            .find(|sc| sc.as_str() == norm)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

/// What Opposite does with nei claims, which have no opposite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeiPolicy {
    /// Condition on nei itself.
    #[default]
    Keep,
    /// Generate nothing for the claim.
    Skip,
}

impl FromStr for NeiPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keep" => Ok(Self::Keep),
            "skip" => Ok(Self::Skip),
            other => Err(format!("unknown nei policy {other:?}")),
        }
    }
}

/// A claim with its label erased. Scenarios that must not see gold labels
/// only ever receive this.
#[derive(Debug, Clone, Copy)]
pub struct ClaimView<'a> {
    pub id: &'a str,
    pub claim: &'a str,
    pub evidence: &'a [EvidenceItem],
}

impl<'a> From<&'a VerificationExample> for ClaimView<'a> {
    fn from(ex: &'a VerificationExample) -> Self {
        Self { id: &ex.id, claim: &ex.claim, evidence: &ex.evidence }
    }
}

impl ClaimView<'_> {
    /// Gold text evidence joined by spaces; silver items are left out.
    pub fn text_evidence(&self) -> String {
        let parts: Vec<&str> = self
            .evidence
            .iter()
            .filter(|e| !e.silver && e.kind == crate::schema::EvidenceKind::Text)
            .map(|e| e.content.as_str())
            .collect();
        parts.join(" ")
    }
}

/// Uniform label for `claim_id`, a pure function of (seed, claim id).
fn random_label(claim_id: &str, seed: u64) -> VeracityLabel {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(b"random");
    h.update(claim_id.as_bytes());
    let digest = h.finalize();
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().unwrap()));
    VeracityLabel::ALL[rng.random_range(0..3)]
}

/// Labels for scenarios that never read gold.
pub fn choose_label_blind(
    view: &ClaimView<'_>,
    scenario: Scenario,
    seed: u64,
    zero_shot: Option<VeracityLabel>,
) -> Result<Vec<VeracityLabel>, ExplainError> {
    use VeracityLabel::*;
    Ok(match scenario {
        Scenario::Oracle | Scenario::Opposite => {
            return Err(ExplainError::MissingGold { claim_id: view.id.to_string(), scenario })
        }
        Scenario::Random => vec![random_label(view.id, seed)],
        Scenario::All => vec![Supported, Refuted, Nei],
        Scenario::AlwaysSupports => vec![Supported],
        Scenario::AlwaysRefutes => vec![Refuted],
        Scenario::AlwaysNei => vec![Nei],
        Scenario::Guided => vec![zero_shot.ok_or_else(|| ExplainError::MissingZeroShot(view.id.to_string()))?],
    })
}

/// Labels for the gold-conditioned scenarios.
pub fn choose_label_gold(gold: VeracityLabel, scenario: Scenario, nei: NeiPolicy) -> Vec<VeracityLabel> {
    use VeracityLabel::*;
    match (scenario, gold) {
        (Scenario::Opposite, Supported) => vec![Refuted],
        (Scenario::Opposite, Refuted) => vec![Supported],
        (Scenario::Opposite, Nei) if nei == NeiPolicy::Skip => vec![],
        _ => vec![gold],
    }
}

/// Conditioning labels for one example. Only Oracle and Opposite touch the
/// gold label; every other scenario sees a [`ClaimView`].
pub fn choose_label(
    ex: &VerificationExample,
    scenario: Scenario,
    seed: u64,
    zero_shot: Option<VeracityLabel>,
    nei: NeiPolicy,
) -> Result<Vec<VeracityLabel>, ExplainError> {
    if scenario.needs_gold() {
        Ok(choose_label_gold(ex.label, scenario, nei))
    } else {
        choose_label_blind(&ClaimView::from(ex), scenario, seed, zero_shot)
    }
}

/// One request per conditioning label per example. `zero_shot` is keyed by
/// claim id and only consulted by the guided scenario.
pub fn plan_requests(
    examples: &[VerificationExample],
    scenario: Scenario,
    seed: u64,
    zero_shot: &HashMap<String, VeracityLabel>,
    nei: NeiPolicy,
) -> Result<Vec<ExplanationRequest>, ExplainError> {
    let mut out = Vec::new();
    for ex in examples {
        let labels = choose_label(ex, scenario, seed, zero_shot.get(&ex.id).copied(), nei)?;
        let evidence = ClaimView::from(ex).text_evidence();
        out.extend(labels.into_iter().map(|label| ExplanationRequest {
            claim_id: ex.id.clone(),
            claim: ex.claim.clone(),
            evidence: evidence.clone(),
            label,
            scenario,
        }));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub claim_id: String,
    pub label: VeracityLabel,
    pub scenario: Scenario,
    pub generator: String,
    pub text: String,
    pub prompt_hash: String,
    #[serde(skip)]
    pub cached: bool,
}

impl ExplanationRecord {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    pub fn over_word_limit(&self) -> bool {
        self.word_count() > WORD_LIMIT
    }
}
