//! Date-bounded evaluation sets carved out of a dated news pool.

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::schema::{Split, VerificationExample};

pub const DEFAULT_SAMPLE_SIZE: usize = 1000;

/// Case-insensitive substrings marking Ukraine-Russia war coverage.
pub const UKR_KEYWORDS: [&str; 6] = ["ukraine", "russia", "kyiv", "kremlin", "zelensky", "invasion"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TemporalKey {
    Pre,
    Pos,
    Ukr,
}

impl TemporalKey {
    pub const ALL: [TemporalKey; 3] = [Self::Pre, Self::Pos, Self::Ukr];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pre => "pre",
            Self::Pos => "pos",
            Self::Ukr => "ukr",
        }
    }

    fn stream(self) -> u64 {
        self as u64
    }

    pub fn accepts(self, ex: &VerificationExample, keywords: &[&str]) -> bool {
        let Some(date) = ex.timestamp else { return false };
        match self {
            Self::Pre => date < NaiveDate::from_ymd_opt(2020, 12, 1).unwrap(),
            Self::Pos => date.year() == 2021,
            Self::Ukr => date.year() == 2022 && matches_keywords(&ex.claim, keywords),
        }
    }
}

fn matches_keywords(text: &str, keywords: &[&str]) -> bool {
    let lower = text.to_lowercase();
    keywords.iter().any(|k| lower.contains(&k.to_lowercase()))
}

pub fn is_ukr_topic(text: &str) -> bool {
    matches_keywords(text, &UKR_KEYWORDS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalPartitions {
    pub pre: Vec<VerificationExample>,
    pub pos: Vec<VerificationExample>,
    pub ukr: Vec<VerificationExample>,
}

impl TemporalPartitions {
    pub fn get(&self, key: TemporalKey) -> &[VerificationExample] {
        match key {
            TemporalKey::Pre => &self.pre,
            TemporalKey::Pos => &self.pos,
            TemporalKey::Ukr => &self.ukr,
        }
    }

    pub fn into_examples(self) -> impl Iterator<Item = VerificationExample> {
        self.pre.into_iter().chain(self.pos).chain(self.ukr)
    }
}

/// Samples `size` examples per partition. Candidates are ordered by id before
/// the seeded shuffle so the result does not depend on input order. Sampled
/// examples are re-keyed to the partition name and the test split.
pub fn build_temporal_partitions(
    pool: &[VerificationExample],
    seed: u64,
    size: usize,
    keywords: &[&str],
) -> Result<TemporalPartitions, EvalError> {
    let sample = |key: TemporalKey| -> Result<Vec<VerificationExample>, EvalError> {
        let mut candidates: Vec<&VerificationExample> = pool.iter().filter(|ex| key.accepts(ex, keywords)).collect();
        if candidates.len() < size {
            return Err(EvalError::InsufficientPool { key: key.as_str().into(), found: candidates.len(), needed: size });
        }
        candidates.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(key.stream());
        candidates.shuffle(&mut rng);
        Ok(candidates[..size]
            .iter()
            .map(|ex| VerificationExample {
                dataset: key.as_str().into(),
                split: Split::Test,
                ..(*ex).clone()
            })
            .collect())
    };
    Ok(TemporalPartitions {
        pre: sample(TemporalKey::Pre)?,
        pos: sample(TemporalKey::Pos)?,
        ukr: sample(TemporalKey::Ukr)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{DomainTag, VeracityLabel};

    fn dated(id: &str, y: i32, m: u32, d: u32, claim: &str) -> VerificationExample {
        VerificationExample {
            id: id.into(),
            claim: claim.into(),
            evidence: vec![],
            label: VeracityLabel::Supported,
            dataset: "ngt".into(),
            domain: DomainTag::Misinformation,
            split: Split::Train,
            timestamp: NaiveDate::from_ymd_opt(y, m, d),
        }
    }

    #[test]
    fn date_predicates() {
        assert!(TemporalKey::Pre.accepts(&dated("a", 2020, 6, 15, "x"), &UKR_KEYWORDS));
        assert!(!TemporalKey::Pre.accepts(&dated("a", 2020, 12, 1, "x"), &UKR_KEYWORDS));
        assert!(TemporalKey::Pos.accepts(&dated("a", 2021, 3, 1, "x"), &UKR_KEYWORDS));
        assert!(TemporalKey::Ukr.accepts(&dated("a", 2022, 3, 1, "Troops near KYIV"), &UKR_KEYWORDS));
        assert!(!TemporalKey::Ukr.accepts(&dated("a", 2022, 3, 1, "local election"), &UKR_KEYWORDS));
        assert!(!TemporalKey::Ukr.accepts(&dated("a", 2021, 3, 1, "russia"), &UKR_KEYWORDS));
    }

    #[test]
    fn insufficient_pool() {
        let pool = vec![dated("a", 2020, 1, 1, "x")];
        let err = build_temporal_partitions(&pool, 0, 1, &UKR_KEYWORDS).unwrap_err();
        assert!(matches!(err, EvalError::InsufficientPool { found: 0, .. }));
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut pool: Vec<_> = (0..30)
            .map(|i| dated(&format!("n{i:02}"), 2020 + (i % 3), 2, 1, "russia news"))
            .collect();
        pool[0].timestamp = NaiveDate::from_ymd_opt(2020, 2, 1);
        let a = build_temporal_partitions(&pool, 7, 5, &UKR_KEYWORDS).unwrap();
        pool.reverse();
        let b = build_temporal_partitions(&pool, 7, 5, &UKR_KEYWORDS).unwrap();
        assert_eq!(a, b);
        assert!(a.pre.iter().all(|e| e.dataset == "pre" && e.split == Split::Test));
    }
}
