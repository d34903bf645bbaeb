//! Aggregation of crowd judgments of explanation quality.
//!
//! Ingestion TSV columns: `worker_id`, `claim_id`, `generator`, `gold_label`,
//! `question` (Q1..Q6), `answer`. One row per worker, item and question.
//! Answers: `yes`/`no` for Q1-Q4; `the label is true`, `the label is false`,
//! `the label is unprovable` or `no` for Q5 (the short forms `true`, `false`,
//! `unprovable` are accepted); an integer 1-5 for Q6.

pub mod kappa;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::VeracityLabel;

pub use kappa::{fleiss_kappa, kappa_unbalanced};

pub const RATERS_PER_ITEM: usize = 5;

#[derive(Debug, Error)]
pub enum AnnoError {
    #[error("row {row} has {raters} ratings, expected {expected}")]
    RaggedMatrix { row: usize, raters: u32, expected: u32 },
    #[error("all ratings fall in one category; kappa is undefined")]
    DegenerateAgreement,
    #[error("empty count matrix")]
    EmptyMatrix,
    #[error("unknown question {0:?}")]
    BadQuestion(String),
    #[error("{question}: invalid answer {answer:?}")]
    BadResponse { question: Question, answer: String },
    #[error("item {claim_id}/{generator} has {found} responses to {question}, expected {expected}")]
    ResponseCount { claim_id: String, generator: String, question: Question, found: usize, expected: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Question {
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Q6,
}

impl Question {
    pub const ALL: [Question; 6] = [Self::Q1, Self::Q2, Self::Q3, Self::Q4, Self::Q5, Self::Q6];

    /// Category order; also the tie-break order for majority votes.
    pub fn categories(self) -> Vec<Response> {
        use Response::*;
        match self {
            Self::Q1 | Self::Q2 | Self::Q3 | Self::Q4 => vec![No, Yes],
            Self::Q5 => vec![LabelTrue, LabelFalse, LabelUnprovable, No],
            Self::Q6 => (1..=5).map(Score).collect(),
        }
    }

    pub fn category_index(self, r: Response) -> Option<usize> {
        self.categories().iter().position(|c| *c == r)
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Question {
    type Err = AnnoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|q| q.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AnnoError::BadQuestion(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Yes,
    No,
    LabelTrue,
    LabelFalse,
    LabelUnprovable,
    Score(u8),
}

impl Response {
    pub fn parse(question: Question, answer: &str) -> Result<Self, AnnoError> {
        let a = answer.trim().to_ascii_lowercase();
        let a = a.strip_prefix("the label is ").unwrap_or(&a);
        let r = match (question, a) {
            (Question::Q6, s) => match s.parse::<u8>() {
                Ok(v @ 1..=5) => Some(Response::Score(v)),
                _ => None,
            },
            (_, "no") => Some(Response::No),
            (Question::Q5, "true") => Some(Response::LabelTrue),
            (Question::Q5, "false") => Some(Response::LabelFalse),
            (Question::Q5, "unprovable") => Some(Response::LabelUnprovable),
            (Question::Q5, _) => None,
            (_, "yes") => Some(Response::Yes),
            _ => None,
        };
        r.ok_or_else(|| AnnoError::BadResponse { question, answer: answer.to_string() })
    }
}

/// Q5 answer naming the category of a conditioning label.
pub fn label_category(label: VeracityLabel) -> Response {
    match label {
        VeracityLabel::Supported => Response::LabelTrue,
        VeracityLabel::Refuted => Response::LabelFalse,
        VeracityLabel::Nei => Response::LabelUnprovable,
    }
}

/// Modal response; ties go to the category listed first in
/// [`Question::categories`] (no before yes, lower scores first, "no" last on Q5).
pub fn majority(question: Question, answers: &[Response]) -> Option<Response> {
    let cats = question.categories();
    let mut best: Option<(usize, Response)> = None;
    for c in cats {
        let n = answers.iter().filter(|a| **a == c).count();
        if n > 0 && best.is_none_or(|(m, _)| n > m) {
            best = Some((n, c));
        }
    }
    best.map(|(_, c)| c)
}

/// True if at least one Q5 answer names the gold label's category.
pub fn predictability(q5: &[Response], gold: VeracityLabel) -> bool {
    let target = label_category(gold);
    q5.contains(&target)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRow {
    pub worker_id: String,
    pub claim_id: String,
    pub generator: String,
    pub gold_label: VeracityLabel,
    pub question: Question,
    pub answer: Response,
}

pub fn read_tsv(path: &Path) -> Result<Vec<AnnotationRow>, AnnoError> {
    let text = std::fs::read_to_string(path).map_err(|source| AnnoError::Io { path: path.display().to_string(), source })?;
    parse_tsv(&text)
}

pub fn parse_tsv(text: &str) -> Result<Vec<AnnotationRow>, AnnoError> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(b'\t').quoting(false).comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| AnnoError::Parse { line: 1, message: e.to_string() })?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| AnnoError::Parse { line: 1, message: format!("missing column {name}") })
    };
    let (w, c, g, l, q, a) = (col("worker_id")?, col("claim_id")?, col("generator")?, col("gold_label")?, col("question")?, col("answer")?);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| AnnoError::Parse { line: 0, message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let question: Question = field(q).parse()?;
        let gold_label = field(l).parse().map_err(|message| AnnoError::Parse { line, message })?;
        rows.push(AnnotationRow {
            worker_id: field(w),
            claim_id: field(c),
            generator: field(g),
            gold_label,
            question,
            answer: Response::parse(question, &field(a))?,
        });
    }
    Ok(rows)
}

type ItemKey = (String, String);

fn group(rows: &[AnnotationRow], question: Question) -> BTreeMap<ItemKey, Vec<&AnnotationRow>> {
    let mut out: BTreeMap<ItemKey, Vec<&AnnotationRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.question == question) {
        out.entry((r.claim_id.clone(), r.generator.clone())).or_default().push(r);
    }
    out
}

/// Checks that every item has exactly `expected` responses to every question.
pub fn check_complete(rows: &[AnnotationRow], expected: usize) -> Result<(), AnnoError> {
    let items: BTreeSet<ItemKey> = rows.iter().map(|r| (r.claim_id.clone(), r.generator.clone())).collect();
    for q in Question::ALL {
        let groups = group(rows, q);
        for item in &items {
            let found = groups.get(item).map_or(0, Vec::len);
            if found != expected {
                return Err(AnnoError::ResponseCount {
                    claim_id: item.0.clone(),
                    generator: item.1.clone(),
                    question: q,
                    found,
                    expected,
                });
            }
        }
    }
    Ok(())
}

/// Items x categories counts for one question; items with fewer than two
/// responses are dropped.
pub fn count_matrix(rows: &[AnnotationRow], question: Question) -> Vec<Vec<u32>> {
    let k = question.categories().len();
    group(rows, question)
        .values()
        .filter(|rs| rs.len() >= 2)
        .map(|rs| {
            let mut row = vec![0u32; k];
            for r in rs {
                if let Some(i) = question.category_index(r.answer) {
                    row[i] += 1;
                }
            }
            row
        })
        .collect()
}

fn q6_kappa(rows: &[AnnotationRow]) -> Result<f64, AnnoError> {
    let m = count_matrix(rows, Question::Q6);
    if m.is_empty() {
        return Err(AnnoError::EmptyMatrix);
    }
    kappa_unbalanced(&m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub threshold: f64,
    pub initial_kappa: Option<f64>,
    pub final_kappa: Option<f64>,
    /// Removed annotators with the Q6 kappa reached after each removal.
    pub removed: Vec<(String, f64)>,
}

/// Greedy leave-one-out on Q6 agreement: while kappa is below `threshold`,
/// drop the annotator whose removal raises it most (ties to the smallest
/// id). Stops when no removal helps or two annotators remain. A threshold
/// of zero or less disables filtering.
pub fn filter_annotators(rows: &[AnnotationRow], threshold: f64) -> (Vec<AnnotationRow>, FilterReport) {
    let initial = q6_kappa(rows).ok();
    let mut report = FilterReport { threshold, initial_kappa: initial, final_kappa: initial, removed: vec![] };
    if threshold <= 0.0 {
        return (rows.to_vec(), report);
    }
    let mut kept: BTreeSet<&str> = rows.iter().map(|r| r.worker_id.as_str()).collect();
    let Some(mut current) = initial else { return (rows.to_vec(), report) };
    let subset = |kept: &BTreeSet<&str>| -> Vec<AnnotationRow> {
        rows.iter().filter(|r| kept.contains(r.worker_id.as_str())).cloned().collect()
    };
    while current < threshold && kept.len() > 2 {
        let mut best: Option<(&str, f64)> = None;
        for &w in &kept {
            let mut trial = kept.clone();
            trial.remove(w);
            if let Ok(k) = q6_kappa(&subset(&trial)) {
                if best.is_none_or(|(_, b)| k > b) {
                    best = Some((w, k));
                }
            }
        }
        match best {
            Some((w, k)) if k > current => {
                log::info!("dropping annotator {w}: Q6 kappa {current:.3} -> {k:.3}");
                kept.remove(w);
                report.removed.push((w.to_string(), k));
                current = k;
            }
            _ => break,
        }
    }
    report.final_kappa = Some(current);
    (subset(&kept), report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub claim_id: String,
    pub generator: String,
    pub gold_label: VeracityLabel,
    pub majority: BTreeMap<Question, Response>,
    pub predictable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSummary {
    pub items: usize,
    /// Share of items whose majority answer is yes, per yes/no question.
    pub yes_rate: BTreeMap<Question, f64>,
    /// Share of items whose majority Q5 answer names the gold category.
    pub majority_predicted_rate: f64,
    pub predictability_rate: f64,
    /// Mean of all Q6 scores.
    pub mean_quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnoReport {
    pub filter: FilterReport,
    pub kappa: BTreeMap<Question, Option<f64>>,
    pub generators: BTreeMap<String, GeneratorSummary>,
    pub items: Vec<ItemSummary>,
}

/// Filters annotators, then aggregates per item and per generator.
pub fn aggregate(rows: &[AnnotationRow], threshold: f64) -> AnnoReport {
    let (kept, filter) = filter_annotators(rows, threshold);
    let mut kappa = BTreeMap::new();
    for q in Question::ALL {
        let m = count_matrix(&kept, q);
        kappa.insert(q, if m.is_empty() { None } else { kappa_unbalanced(&m).ok() });
    }
    let mut by_item: BTreeMap<ItemKey, Vec<&AnnotationRow>> = BTreeMap::new();
    for r in &kept {
        by_item.entry((r.claim_id.clone(), r.generator.clone())).or_default().push(r);
    }
    let items: Vec<ItemSummary> = by_item
        .into_iter()
        .map(|((claim_id, generator), rs)| {
            let gold_label = rs[0].gold_label;
            let answers = |q: Question| rs.iter().filter(|r| r.question == q).map(|r| r.answer).collect::<Vec<_>>();
            let majority_map = Question::ALL.into_iter().filter_map(|q| majority(q, &answers(q)).map(|m| (q, m))).collect();
            ItemSummary { predictable: predictability(&answers(Question::Q5), gold_label), claim_id, generator, gold_label, majority: majority_map }
        })
        .collect();

    let mut generators = BTreeMap::new();
    let names: BTreeSet<&str> = items.iter().map(|i| i.generator.as_str()).collect();
    for g in names {
        let its: Vec<&ItemSummary> = items.iter().filter(|i| i.generator == g).collect();
        let n = its.len() as f64;
        let yes_rate = [Question::Q1, Question::Q2, Question::Q3, Question::Q4]
            .into_iter()
            .map(|q| (q, its.iter().filter(|i| i.majority.get(&q) == Some(&Response::Yes)).count() as f64 / n))
            .collect();
        let scores: Vec<f64> = kept
            .iter()
            .filter(|r| r.generator == g && r.question == Question::Q6)
            .filter_map(|r| match r.answer {
                Response::Score(s) => Some(s as f64),
                _ => None,
            })
            .collect();
        generators.insert(
            g.to_string(),
            GeneratorSummary {
                items: its.len(),
                yes_rate,
                majority_predicted_rate: its
                    .iter()
                    .filter(|i| i.majority.get(&Question::Q5) == Some(&label_category(i.gold_label)))
                    .count() as f64
                    / n,
                predictability_rate: its.iter().filter(|i| i.predictable).count() as f64 / n,
                mean_quality: if scores.is_empty() { f64::NAN } else { scores.iter().sum::<f64>() / scores.len() as f64 },
            },
        );
    }
    AnnoReport { filter, kappa, generators, items }
}
