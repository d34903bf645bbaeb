//! Per-dataset adapters. Each adapter documents the column contract of the
//! raw export it reads and carries a fixed native-label mapping table.
//!
//! Binary datasets follow one convention: benign / true-like native labels
//! map to code 0, toxic / false-like labels map to code 1. Stance datasets map
//! favor-like labels to 0 and against-like labels to 1.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde_json::Value;

use super::{
    descriptor, jsonl, DomainTag, EvidenceItem, SchemaError, Split, VeracityLabel,
    VerificationExample,
};

/// Bumped whenever any mapping table below changes.
pub const LABEL_MAP_VERSION: u32 = 1;

/// A raw record as read from a TSV row or a JSONL object.
pub type RawRecord = serde_json::Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NativeFormat {
    Tsv,
    Jsonl,
}

impl NativeFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Tsv => "tsv",
            Self::Jsonl => "jsonl",
        }
    }
}

/// Column contract and label table for one dataset.
#[derive(Debug, Clone)]
pub struct Adapter {
    pub key: &'static str,
    pub format: NativeFormat,
    pub id_field: &'static str,
    pub claim_field: &'static str,
    pub label_field: &'static str,
    /// Text evidence columns, appended in this order. JSON arrays expand to one item per element.
    pub text_fields: &'static [&'static str],
    /// Image reference column; TSV values may hold several refs separated by `;`.
    pub image_field: Option<&'static str>,
    pub date_field: Option<&'static str>,
    /// Native label (matched case-insensitively after trimming) to shared code.
    pub labels: &'static [(&'static str, VeracityLabel)],
}

use VeracityLabel::{Nei, Refuted as R, Supported as S};

const NELA_LABELS: &[(&str, VeracityLabel)] = &[("reliable", S), ("0", S), ("unreliable", R), ("2", R)];
const FEVER_LABELS: &[(&str, VeracityLabel)] = &[
    ("supports", S),
    ("supported", S),
    ("refutes", R),
    ("refuted", R),
    ("not enough info", Nei),
    ("nei", Nei),
];

const ADAPTERS: &[Adapter] = &[
    // Fakeddit: id, clean_title, image_url, 2_way_label (1 = true content, 0 = fake)
    Adapter {
        key: "fak",
        format: NativeFormat::Tsv,
        id_field: "id",
        claim_field: "clean_title",
        label_field: "2_way_label",
        text_fields: &[],
        image_field: Some("image_url"),
        date_field: None,
        labels: &[("1", S), ("true", S), ("0", R), ("fake", R)],
    },
    // HatefulMemes: {"id", "img", "label" (0/1), "text"}
    Adapter {
        key: "ham",
        format: NativeFormat::Jsonl,
        id_field: "id",
        claim_field: "text",
        label_field: "label",
        text_fields: &[],
        image_field: Some("img"),
        date_field: None,
        labels: &[("0", S), ("not_hateful", S), ("1", R), ("hateful", R), ("hate", R)],
    },
    // HateXplain: id, text, label (majority of annotator labels)
    Adapter {
        key: "hax",
        format: NativeFormat::Tsv,
        id_field: "id",
        claim_field: "text",
        label_field: "label",
        text_fields: &[],
        image_field: None,
        date_field: None,
        labels: &[("normal", S), ("hatespeech", R), ("offensive", R), ("hate", R)],
    },
    // MMHS150K: id, tweet_text, img_path, label
    Adapter {
        key: "mmh",
        format: NativeFormat::Tsv,
        id_field: "id",
        claim_field: "tweet_text",
        label_field: "label",
        text_fields: &[],
        image_field: Some("img_path"),
        date_field: None,
        labels: &[
            ("nothate", S),
            ("not_hate", S),
            ("racist", R),
            ("sexist", R),
            ("homophobe", R),
            ("religion", R),
            ("otherhate", R),
            ("hate", R),
        ],
    },
    // Mocheg: claim_id, Claim, Evidence, cleaned_truthfulness, images
    Adapter {
        key: "moc",
        format: NativeFormat::Tsv,
        id_field: "claim_id",
        claim_field: "Claim",
        label_field: "cleaned_truthfulness",
        text_fields: &["Evidence"],
        image_field: Some("images"),
        date_field: None,
        labels: &[("supported", S), ("refuted", R), ("nei", Nei)],
    },
    // Misinfo Reaction Frames: id, headline, gold_label
    Adapter {
        key: "mrf",
        format: NativeFormat::Tsv,
        id_field: "id",
        claim_field: "headline",
        label_field: "gold_label",
        text_fields: &[],
        image_field: None,
        date_field: None,
        labels: &[("real", S), ("misinfo", R)],
    },
    // NELA-GT exports: {"id", "date", "source", "title", "content", "label"}
    Adapter {
        key: "pre",
        format: NativeFormat::Jsonl,
        id_field: "id",
        claim_field: "title",
        label_field: "label",
        text_fields: &[],
        image_field: None,
        date_field: Some("date"),
        labels: NELA_LABELS,
    },
    Adapter {
        key: "pos",
        format: NativeFormat::Jsonl,
        id_field: "id",
        claim_field: "title",
        label_field: "label",
        text_fields: &[],
        image_field: None,
        date_field: Some("date"),
        labels: NELA_LABELS,
    },
    Adapter {
        key: "ukr",
        format: NativeFormat::Jsonl,
        id_field: "id",
        claim_field: "title",
        label_field: "label",
        text_fields: &[],
        image_field: None,
        date_field: Some("date"),
        labels: NELA_LABELS,
    },
    // P-Stance: id, tweet, target, label; the target becomes text evidence
    Adapter {
        key: "pst",
        format: NativeFormat::Tsv,
        id_field: "id",
        claim_field: "tweet",
        label_field: "label",
        text_fields: &["target"],
        image_field: None,
        date_field: None,
        labels: &[("favor", S), ("against", R)],
    },
    // PubHealth: claim_id, claim, main_text, label
    Adapter {
        key: "ph",
        format: NativeFormat::Tsv,
        id_field: "claim_id",
        claim_field: "claim",
        label_field: "label",
        text_fields: &["main_text"],
        image_field: None,
        date_field: None,
        labels: &[("true", S), ("false", R), ("mixture", Nei), ("unproven", Nei)],
    },
    // Toxigen: id, text, label
    Adapter {
        key: "tox",
        format: NativeFormat::Tsv,
        id_field: "id",
        claim_field: "text",
        label_field: "label",
        text_fields: &[],
        image_field: None,
        date_field: None,
        labels: &[("benign", S), ("neutral", S), ("toxic", R), ("hate", R)],
    },
    // FEVER: {"id", "claim", "evidence" (string or list of sentences), "label"}
    Adapter {
        key: "fv",
        format: NativeFormat::Jsonl,
        id_field: "id",
        claim_field: "claim",
        label_field: "label",
        text_fields: &["evidence"],
        image_field: None,
        date_field: None,
        labels: FEVER_LABELS,
    },
    // VitaminC: {"unique_id", "claim", "evidence", "label"}
    Adapter {
        key: "vc",
        format: NativeFormat::Jsonl,
        id_field: "unique_id",
        claim_field: "claim",
        label_field: "label",
        text_fields: &["evidence"],
        image_field: None,
        date_field: None,
        labels: FEVER_LABELS,
    },
    Adapter {
        key: "ngt",
        format: NativeFormat::Jsonl,
        id_field: "id",
        claim_field: "title",
        label_field: "label",
        text_fields: &[],
        image_field: None,
        date_field: Some("date"),
        labels: NELA_LABELS,
    },
];

pub fn adapters() -> &'static [Adapter] {
    ADAPTERS
}

pub fn adapter(key: &str) -> Option<&'static Adapter> {
    ADAPTERS.iter().find(|a| a.key == key)
}

impl Adapter {
    pub fn map_label(&self, native: &str) -> Result<VeracityLabel, SchemaError> {
        let needle = native.trim().to_ascii_lowercase();
        self.labels
            .iter()
            .find(|(name, _)| *name == needle)
            .map(|(_, label)| *label)
            .ok_or_else(|| SchemaError::UnknownLabel {
                dataset: self.key.to_string(),
                label: native.to_string(),
            })
    }

    pub fn domain(&self) -> DomainTag {
        descriptor(self.key).map(|d| d.domain).unwrap_or(DomainTag::Misinformation)
    }
}

#[derive(Debug, Clone, Default)]
pub struct NormalizeOptions {
    /// Check that image references resolve (file exists or is an http(s) URL).
    pub strict_images: bool,
    /// Directory relative image paths are resolved against.
    pub image_root: Option<PathBuf>,
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn required(raw: &RawRecord, key: &str, field: &str) -> Result<String, SchemaError> {
    raw.get(field)
        .and_then(scalar_string)
        .ok_or_else(|| SchemaError::MissingField { dataset: key.to_string(), field: field.to_string() })
}

fn string_list(v: &Value, split_semicolon: bool) -> Vec<String> {
    let items: Vec<String> = match v {
        Value::Array(items) => items.iter().filter_map(scalar_string).collect(),
        Value::Null => Vec::new(),
        other => match scalar_string(other) {
            Some(s) if split_semicolon => s.split(';').map(str::to_string).collect(),
            Some(s) => vec![s],
            None => Vec::new(),
        },
    };
    items.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn looks_unified(raw: &RawRecord) -> bool {
    matches!(raw.get("evidence"), Some(Value::Array(items)) if items.iter().all(Value::is_object))
        && matches!(raw.get("label"), Some(Value::Number(_)))
        && raw.contains_key("dataset")
        && raw.contains_key("domain")
        && raw.contains_key("split")
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

fn check_image(reference: &str, opts: &NormalizeOptions) -> Result<(), SchemaError> {
    if !opts.strict_images || reference.starts_with("http://") || reference.starts_with("https://") {
        return Ok(());
    }
    let path = match &opts.image_root {
        Some(root) if Path::new(reference).is_relative() => root.join(reference),
        _ => PathBuf::from(reference),
    };
    if path.is_file() {
        Ok(())
    } else {
        Err(SchemaError::BadImageRef(reference.to_string()))
    }
}

/// Normalizes one raw record of dataset `key` into the unified schema.
///
/// Records that are already unified pass through unchanged, which makes
/// normalization idempotent.
pub fn normalize(
    raw: &RawRecord,
    key: &str,
    split: Split,
    opts: &NormalizeOptions,
) -> Result<VerificationExample, SchemaError> {
    let adapter = adapter(key).ok_or_else(|| SchemaError::UnknownDataset(key.to_string()))?;

    if looks_unified(raw) {
        let line = serde_json::to_string(raw).expect("map serializes");
        let ex = jsonl::parse(&line)?;
        if ex.dataset != key {
            return Err(SchemaError::SchemaViolation(format!(
                "unified record belongs to {:?}, not {key:?}",
                ex.dataset
            )));
        }
        for item in ex.evidence.iter().filter(|e| e.kind == super::EvidenceKind::Image) {
            check_image(&item.content, opts)?;
        }
        return Ok(ex);
    }

    let id = required(raw, key, adapter.id_field)?;
    let claim = required(raw, key, adapter.claim_field)?;
    let label = adapter.map_label(&required(raw, key, adapter.label_field)?)?;

    let mut evidence = Vec::new();
    for field in adapter.text_fields {
        if let Some(v) = raw.get(*field) {
            evidence.extend(string_list(v, false).into_iter().map(EvidenceItem::text));
        }
    }
    if let Some(field) = adapter.image_field {
        if let Some(v) = raw.get(field) {
            for reference in string_list(v, true) {
                check_image(&reference, opts)?;
                evidence.push(EvidenceItem::image(reference));
            }
        }
    }

    let timestamp = match adapter.date_field {
        Some(field) => {
            let raw_date = required(raw, key, field)?;
            Some(parse_date(&raw_date).ok_or_else(|| {
                SchemaError::SchemaViolation(format!("{key} record {id}: bad date {raw_date:?}"))
            })?)
        }
        None => None,
    };

    let ex = VerificationExample {
        id,
        claim,
        evidence,
        label,
        dataset: key.to_string(),
        domain: adapter.domain(),
        split,
        timestamp,
    };
    ex.validate()?;
    Ok(ex)
}

/// Reads every record of a raw TSV (header row, no quoting) or JSONL file.
pub fn read_raw_file(path: &Path, format: NativeFormat) -> Result<Vec<RawRecord>, SchemaError> {
    let io_err = |source| SchemaError::Io { path: path.display().to_string(), source };
    match format {
        NativeFormat::Tsv => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(b'\t')
                .quoting(false)
                .has_headers(true)
                .from_path(path)
                .map_err(|e| SchemaError::SchemaViolation(format!("{}: {e}", path.display())))?;
            let headers = reader
                .headers()
                .map_err(|e| SchemaError::SchemaViolation(format!("{}: {e}", path.display())))?
                .clone();
            let mut out = Vec::new();
            for row in reader.records() {
                let row = row.map_err(|e| SchemaError::SchemaViolation(format!("{}: {e}", path.display())))?;
                let rec: RawRecord = headers
                    .iter()
                    .zip(row.iter())
                    .filter(|(_, v)| !v.is_empty())
                    .map(|(h, v)| (h.to_string(), Value::String(v.to_string())))
                    .collect();
                out.push(rec);
            }
            Ok(out)
        }
        NativeFormat::Jsonl => {
            let reader = BufReader::new(File::open(path).map_err(io_err)?);
            let mut out = Vec::new();
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Value>(&line) {
                    Ok(Value::Object(map)) => out.push(map),
                    _ => {
                        return Err(SchemaError::SchemaViolation(format!(
                            "{}:{}: not a JSON object",
                            path.display(),
                            lineno + 1
                        )))
                    }
                }
            }
            Ok(out)
        }
    }
}

/// The flattened mapping table, one `(dataset, native label, code)` row each.
pub fn mapping_table() -> BTreeMap<(String, String), u8> {
    ADAPTERS
        .iter()
        .flat_map(|a| a.labels.iter().map(move |(n, l)| ((a.key.to_string(), n.to_string()), l.code())))
        .collect()
}
