//! Unified data model shared by every dataset, plus the adapters that bring
//! raw benchmark exports into it.

mod adapters;
mod jsonl;
mod registry;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adapters::{
    adapter, adapters, mapping_table, normalize, read_raw_file, Adapter, NativeFormat, NormalizeOptions,
    RawRecord, LABEL_MAP_VERSION,
};
pub use jsonl::{parse, parse_strict, read_jsonl, serialize, write_jsonl};
pub use registry::{descriptor, registry, DatasetDescriptor, SplitSizes};
pub use store::DatasetStore;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("unknown label {label:?} for dataset {dataset}")]
    UnknownLabel { dataset: String, label: String },
    #[error("missing field {field:?} in {dataset} record")]
    MissingField { dataset: String, field: String },
    #[error("image reference {0:?} does not resolve")]
    BadImageRef(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Shared veracity label space. Codes are part of the on-disk contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum VeracityLabel {
    Supported = 0,
    Refuted = 1,
    Nei = 2,
}

impl VeracityLabel {
    pub const ALL: [VeracityLabel; 3] = [Self::Supported, Self::Refuted, Self::Nei];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Supported),
            1 => Some(Self::Refuted),
            2 => Some(Self::Nei),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn word(self) -> &'static str {
        match self {
            Self::Supported => "supported",
            Self::Refuted => "refuted",
            Self::Nei => "nei",
        }
    }
}

impl TryFrom<u8> for VeracityLabel {
    type Error = String;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        Self::from_code(code).ok_or_else(|| format!("label code {code} outside {{0,1,2}}"))
    }
}

impl From<VeracityLabel> for u8 {
    fn from(label: VeracityLabel) -> u8 {
        label.code()
    }
}

impl fmt::Display for VeracityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

impl FromStr for VeracityLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "supported" | "supports" => Ok(Self::Supported),
            "1" | "refuted" | "refutes" => Ok(Self::Refuted),
            "2" | "nei" => Ok(Self::Nei),
            other => Err(format!("not a veracity label: {other:?}")),
        }
    }
}

pub type LabelSpace = BTreeSet<VeracityLabel>;

pub fn binary_space() -> LabelSpace {
    [VeracityLabel::Supported, VeracityLabel::Refuted].into_iter().collect()
}

pub fn ternary_space() -> LabelSpace {
    VeracityLabel::ALL.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Misinformation,
    Toxicity,
    Stance,
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Misinformation => "misinformation",
            Self::Toxicity => "toxicity",
            Self::Stance => "stance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Self::Train),
            "val" | "dev" | "valid" | "validation" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceKind {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceItem {
    pub kind: EvidenceKind,
    /// Text body, or an image path/URL for image evidence.
    pub content: String,
    /// Set only on machine-generated explanation evidence.
    pub silver: bool,
}

impl EvidenceItem {
    pub fn text(content: impl Into<String>) -> Self {
        Self { kind: EvidenceKind::Text, content: content.into(), silver: false }
    }

    pub fn image(reference: impl Into<String>) -> Self {
        Self { kind: EvidenceKind::Image, content: reference.into(), silver: false }
    }

    pub fn silver_text(content: impl Into<String>) -> Self {
        Self { kind: EvidenceKind::Text, content: content.into(), silver: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationExample {
    pub id: String,
    pub claim: String,
    pub evidence: Vec<EvidenceItem>,
    pub label: VeracityLabel,
    pub dataset: String,
    pub domain: DomainTag,
    pub split: Split,
    pub timestamp: Option<NaiveDate>,
}

impl VerificationExample {
    /// Checks the per-record invariants. Label-space membership is checked
    /// against the registry when the dataset key is known there.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.id.is_empty() {
            return Err(SchemaError::SchemaViolation("empty id".into()));
        }
        if self.dataset.is_empty() {
            return Err(SchemaError::SchemaViolation(format!("{}: empty dataset key", self.id)));
        }
        for (i, item) in self.evidence.iter().enumerate() {
            if item.content.is_empty() {
                return Err(SchemaError::SchemaViolation(format!(
                    "{}: evidence item {i} has empty content",
                    self.id
                )));
            }
        }
        if let Some(desc) = descriptor(&self.dataset) {
            if !desc.label_space.contains(&self.label) {
                return Err(SchemaError::SchemaViolation(format!(
                    "{}: label {} outside {} label space",
                    self.id, self.label, desc.key
                )));
            }
            if desc.domain != self.domain {
                return Err(SchemaError::SchemaViolation(format!(
                    "{}: domain {} does not match {} ({})",
                    self.id, self.domain, desc.key, desc.domain
                )));
            }
            if desc.requires_timestamp && self.timestamp.is_none() {
                return Err(SchemaError::SchemaViolation(format!(
                    "{}: {} examples must carry a timestamp",
                    self.id, desc.key
                )));
            }
        }
        Ok(())
    }

    pub fn has_silver(&self) -> bool {
        self.evidence.iter().any(|e| e.silver)
    }

    /// Copy with every silver evidence item removed.
    pub fn without_silver(&self) -> Self {
        let mut out = self.clone();
        out.evidence.retain(|e| !e.silver);
        out
    }

    /// Gold text evidence joined with single spaces; image references and
    /// silver items are skipped.
    pub fn text_evidence(&self) -> String {
        self.evidence
            .iter()
            .filter(|e| e.kind == EvidenceKind::Text && !e.silver)
            .map(|e| e.content.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_codes_are_fixed() {
        assert_eq!(VeracityLabel::Supported.code(), 0);
        assert_eq!(VeracityLabel::Refuted.code(), 1);
        assert_eq!(VeracityLabel::Nei.code(), 2);
        assert_eq!(VeracityLabel::from_code(3), None);
        assert_eq!(serde_json::to_string(&VeracityLabel::Nei).unwrap(), "2");
        assert!(serde_json::from_str::<VeracityLabel>("7").is_err());
    }

    #[test]
    fn validate_rejects_label_outside_space() {
        let ex = VerificationExample {
            id: "x".into(),
            claim: "c".into(),
            evidence: vec![],
            label: VeracityLabel::Nei,
            dataset: "fak".into(),
            domain: DomainTag::Misinformation,
            split: Split::Train,
            timestamp: None,
        };
        assert!(matches!(ex.validate(), Err(SchemaError::SchemaViolation(_))));
    }

    #[test]
    fn nela_examples_need_timestamps() {
        let ex = VerificationExample {
            id: "n1".into(),
            claim: "headline".into(),
            evidence: vec![],
            label: VeracityLabel::Refuted,
            dataset: "ngt".into(),
            domain: DomainTag::Misinformation,
            split: Split::Train,
            timestamp: None,
        };
        assert!(ex.validate().is_err());
    }

    #[test]
    fn text_evidence_skips_images_and_silver() {
        let ex = VerificationExample {
            id: "x".into(),
            claim: "c".into(),
            evidence: vec![
                EvidenceItem::text("a"),
                EvidenceItem::image("img.jpg"),
                EvidenceItem::silver_text("s"),
                EvidenceItem::text("b"),
            ],
            label: VeracityLabel::Supported,
            dataset: "moc".into(),
            domain: DomainTag::Misinformation,
            split: Split::Train,
            timestamp: None,
        };
        assert_eq!(ex.text_evidence(), "a b");
        assert_eq!(ex.without_silver().evidence.len(), 3);
    }
}
