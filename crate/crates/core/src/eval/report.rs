use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Averaging, EvalError, EVAL_SETS};
use crate::mixture::abbrev;

/// Per-eval-set F1 (percent) for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub averaging: Averaging,
    pub f1: BTreeMap<String, f64>,
}

impl RunMetrics {
    pub fn new<I, K>(run_id: impl Into<String>, averaging: Averaging, scores: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        Self { run_id: run_id.into(), averaging, f1: scores.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub averaging: Averaging,
    pub per_set_f1: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_run: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_f1: Option<BTreeMap<String, f64>>,
}

pub fn round2(x: f64) -> f64 {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Two decimals, explicit sign except for zero ("+1.35", "-0.04", "0.00").
pub fn format_delta(delta: f64) -> String {
    let r = round2(delta);
    if r == 0.0 {
        "0.00".into()
    } else {
        format!("{r:+.2}")
    }
}

/// Builds the report for `run`, with deltas against `baseline` on the eval
/// sets both runs share.
pub fn report(run: &RunMetrics, baseline: Option<&RunMetrics>) -> Result<EvalReport, EvalError> {
    for (key, v) in &run.f1 {
        if !(0.0..=100.0).contains(v) {
            return Err(EvalError::Table(format!("F1 for {key} out of range: {v}")));
        }
    }
    let (baseline_run, delta_f1) = match baseline {
        None => (None, None),
        Some(base) => {
            let deltas: BTreeMap<String, f64> = run
                .f1
                .iter()
                .filter_map(|(k, v)| base.f1.get(k).map(|b| (k.clone(), round2(v - b))))
                .collect();
            if deltas.is_empty() {
                return Err(EvalError::DisjointEvalSets { run: run.run_id.clone(), baseline: base.run_id.clone() });
            }
            (Some(base.run_id.clone()), Some(deltas))
        }
    };
    Ok(EvalReport { run_id: run.run_id.clone(), averaging: run.averaging, per_set_f1: run.f1.clone(), baseline_run, delta_f1 })
}

/// Eval-set keys ordered by report column order, unknown keys last.
fn ordered_keys<'a>(keys: impl Iterator<Item = &'a String>) -> Vec<&'a String> {
    let mut keys: Vec<&String> = keys.collect();
    keys.sort_by_key(|k| (EVAL_SETS.iter().position(|e| e == k).unwrap_or(EVAL_SETS.len()), k.to_string()));
    keys
}

impl EvalReport {
    pub fn f1_table(&self) -> Table {
        let keys = ordered_keys(self.per_set_f1.keys());
        let mut t = Table::new(std::iter::once("run".to_string()).chain(keys.iter().map(|k| abbrev(k))));
        t.push(std::iter::once(self.run_id.clone()).chain(keys.iter().map(|k| format!("{:.2}", self.per_set_f1[*k]))));
        t
    }

    pub fn delta_table(&self) -> Option<Table> {
        let deltas = self.delta_f1.as_ref()?;
        let keys = ordered_keys(deltas.keys());
        let mut t = Table::new(std::iter::once("run".to_string()).chain(keys.iter().map(|k| abbrev(k))));
        t.push(std::iter::once(self.run_id.clone()).chain(keys.iter().map(|k| format_delta(deltas[*k]))));
        Some(t)
    }
}

/// A header row plus string cells. TSV is the machine contract; `to_text`
/// is for people.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<I, S>(columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i < widths.len() {
                    widths[i] = widths[i].max(cell.chars().count());
                }
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[0]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&self.columns);
        for row in &self.rows {
            line(row);
        }
        out
    }

    /// Parses a TSV with a header row. Lines starting with `#` are skipped.
    pub fn from_tsv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| EvalError::Table("empty table".into()))?;
        let mut t = Table::new(header.split('\t'));
        for (i, line) in lines.enumerate() {
            let cells: Vec<String> = line.split('\t').map(|c| c.trim().to_string()).collect();
            if cells.len() != t.columns.len() {
                return Err(EvalError::Table(format!("row {} has {} cells, header has {}", i + 1, cells.len(), t.columns.len())));
            }
            t.rows.push(cells);
        }
        Ok(t)
    }
}
