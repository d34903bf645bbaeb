//! Scoring: label-space mapping, F1, temporal partitions and report tables.

pub mod report;
pub mod temporal;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{LabelSpace, VeracityLabel};
use crate::verifier::VeracityPrediction;

pub use report::{format_delta, report, round2, EvalReport, RunMetrics, Table};
pub use temporal::{build_temporal_partitions, is_ukr_topic, TemporalKey, TemporalPartitions, UKR_KEYWORDS};

/// Evaluation sets in report column order.
pub const EVAL_SETS: [&str; 12] = ["moc", "fak", "ph", "pre", "pos", "ukr", "mrf", "hax", "mmh", "tox", "ham", "pst"];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction is nei but carries no probability vector to map into a binary space")]
    MissingProbs,
    #[error("{preds} predictions for {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no examples to score")]
    EmptyInput,
    #[error("partition {key} has {found} candidates, needs {needed}")]
    InsufficientPool { key: String, found: usize, needed: usize },
    #[error("runs {run} and {baseline} share no eval set")]
    DisjointEvalSets { run: String, baseline: String },
    #[error("unknown eval set {0:?}")]
    UnknownEvalSet(String),
    #[error("table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
    Weighted,
}

impl FromStr for Averaging {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "macro" => Ok(Self::Macro),
            "micro" => Ok(Self::Micro),
            "weighted" => Ok(Self::Weighted),
            other => Err(format!("unknown averaging {other:?}")),
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Macro => "macro",
            Self::Micro => "micro",
            Self::Weighted => "weighted",
        })
    }
}

/// Projects a 3-way prediction into `target`. Binary targets keep 0/1 and send
/// nei to the more probable of supported/refuted (ties to supported).
pub fn map_prediction(pred: &VeracityPrediction, target: &LabelSpace) -> Result<VeracityLabel, EvalError> {
    if target.contains(&pred.label) {
        return Ok(pred.label);
    }
    if pred.probs.len() < 2 {
        return Err(EvalError::MissingProbs);
    }
    let best = if pred.probs[1] > pred.probs[0] { VeracityLabel::Refuted } else { VeracityLabel::Supported };
    Ok(best)
}

/// F1 in percent. Macro and weighted average over every label seen in either
/// golds or predictions; micro F1 over single-label data equals accuracy.
pub fn f1(preds: &[VeracityLabel], golds: &[VeracityLabel], averaging: Averaging) -> Result<f64, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut tp = [0usize; 3];
    let mut pred_n = [0usize; 3];
    let mut gold_n = [0usize; 3];
    for (p, g) in preds.iter().zip(golds) {
        pred_n[p.index()] += 1;
        gold_n[g.index()] += 1;
        if p == g {
            tp[p.index()] += 1;
        }
    }
    if averaging == Averaging::Micro {
        return Ok(100.0 * tp.iter().sum::<usize>() as f64 / preds.len() as f64);
    }
    let labels: BTreeSet<VeracityLabel> = preds.iter().chain(golds).copied().collect();
    let per_class = |k: usize| {
        let precision = if pred_n[k] == 0 { 0.0 } else { tp[k] as f64 / pred_n[k] as f64 };
        let recall = if gold_n[k] == 0 { 0.0 } else { tp[k] as f64 / gold_n[k] as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    };
    let score = match averaging {
        Averaging::Macro => labels.iter().map(|l| per_class(l.index())).sum::<f64>() / labels.len() as f64,
        _ => labels.iter().map(|l| per_class(l.index()) * gold_n[l.index()] as f64).sum::<f64>() / golds.len() as f64,
    };
    Ok(100.0 * score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{binary_space, ternary_space};
    use VeracityLabel::*;

    fn pred(label: VeracityLabel, probs: &[f64]) -> VeracityPrediction {
        VeracityPrediction { probs: probs.to_vec(), label }
    }

    #[test]
    fn mapping_examples() {
        let b = binary_space();
        assert_eq!(map_prediction(&pred(Supported, &[0.5, 0.3, 0.2]), &b).unwrap(), Supported);
        assert_eq!(map_prediction(&pred(Nei, &[0.20, 0.35, 0.45]), &b).unwrap(), Refuted);
        assert_eq!(map_prediction(&pred(Nei, &[0.3, 0.3, 0.4]), &b).unwrap(), Supported);
        assert_eq!(map_prediction(&pred(Nei, &[]), &b), Err(EvalError::MissingProbs));
        assert_eq!(map_prediction(&pred(Nei, &[]), &ternary_space()).unwrap(), Nei);
    }

    #[test]
    fn f1_extremes() {
        let g = [Supported, Refuted, Nei, Refuted];
        for avg in [Averaging::Macro, Averaging::Micro, Averaging::Weighted] {
            assert_eq!(f1(&g, &g, avg).unwrap(), 100.0);
        }
        let golds = [Supported, Refuted, Supported];
        let preds = [Refuted, Supported, Refuted];
        assert_eq!(f1(&preds, &golds, Averaging::Macro).unwrap(), 0.0);
    }

    #[test]
    fn f1_three_class_confusion() {
        // gold\pred   S  R  N
        //   S         3  1  0
        //   R         1  2  1
        //   N         0  1  1
        let mut preds = vec![];
        let mut golds = vec![];
        let cells = [(Supported, Supported, 3), (Supported, Refuted, 1), (Refuted, Supported, 1), (Refuted, Refuted, 2), (Refuted, Nei, 1), (Nei, Refuted, 1), (Nei, Nei, 1)];
        for (g, p, n) in cells {
            for _ in 0..n {
                golds.push(g);
                preds.push(p);
            }
        }
        // S: p=3/4 r=3/4 f=3/4; R: p=2/4 r=2/4 f=1/2; N: p=1/2 r=1/2 f=1/2
        let macro_ref = 100.0 * (0.75 + 0.5 + 0.5) / 3.0;
        let weighted_ref = 100.0 * (0.75 * 4.0 + 0.5 * 4.0 + 0.5 * 2.0) / 10.0;
        assert!((f1(&preds, &golds, Averaging::Macro).unwrap() - macro_ref).abs() < 1e-9);
        assert!((f1(&preds, &golds, Averaging::Weighted).unwrap() - weighted_ref).abs() < 1e-9);
        assert!((f1(&preds, &golds, Averaging::Micro).unwrap() - 60.0).abs() < 1e-9);
    }

    #[test]
    fn f1_errors() {
        assert_eq!(f1(&[], &[], Averaging::Macro), Err(EvalError::EmptyInput));
        assert_eq!(f1(&[Nei], &[], Averaging::Macro), Err(EvalError::LengthMismatch { preds: 1, golds: 0 }));
    }
}
