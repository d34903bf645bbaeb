#![allow(dead_code)]

use std::path::PathBuf;

use chrono::NaiveDate;
use factmix::schema::{registry, EvidenceItem, EvidenceKind, Split, VeracityLabel, VerificationExample};
use rand::Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

const ALPHABET: &[char] = &['a', 'Z', '7', ' ', '"', '\\', '\t', '\n', 'é', '✓', '{', ',', '😀', '\u{0}'];

pub fn random_text<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

/// A schema-valid example drawn from the registered datasets.
pub fn random_example<R: Rng>(rng: &mut R, n: usize) -> VerificationExample {
    let descs = registry();
    let d = &descs[rng.random_range(0..descs.len())];
    let labels: Vec<VeracityLabel> = d.label_space.iter().copied().collect();
    let evidence = (0..rng.random_range(0..4))
        .map(|_| EvidenceItem {
            kind: if rng.random_bool(0.5) { EvidenceKind::Text } else { EvidenceKind::Image },
            content: random_text(rng, 1, 30),
            silver: rng.random_bool(0.2),
        })
        .collect();
    let timestamp = (d.requires_timestamp || rng.random_bool(0.3)).then(|| {
        NaiveDate::from_ymd_opt(rng.random_range(1990..2030), rng.random_range(1..=12), rng.random_range(1..=28)).unwrap()
    });
    VerificationExample {
        id: format!("{}-{n}-{}", d.key, random_text(rng, 0, 6)),
        claim: random_text(rng, 0, 60),
        evidence,
        label: labels[rng.random_range(0..labels.len())],
        dataset: d.key.to_string(),
        domain: d.domain,
        split: Split::ALL[rng.random_range(0..3)],
        timestamp,
    }
}

pub fn simple(id: &str, dataset: &str, split: Split, label: VeracityLabel) -> VerificationExample {
    let d = factmix::schema::descriptor(dataset).expect("registered dataset");
    VerificationExample {
        id: id.into(),
        claim: format!("claim {id}"),
        evidence: vec![EvidenceItem::text(format!("evidence {id}"))],
        label,
        dataset: dataset.into(),
        domain: d.domain,
        split,
        timestamp: d.requires_timestamp.then(|| NaiveDate::from_ymd_opt(2021, 6, 1).unwrap()),
    }
}
