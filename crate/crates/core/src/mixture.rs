//! Training mixtures over normalized datasets.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{descriptor, registry, DatasetStore, LabelSpace, Split, VerificationExample};

/// The six fact-checking training sets used for the intra-domain mixtures.
pub const INTRA_DOMAIN_POOL: [&str; 6] = ["fak", "fv", "moc", "ngt", "ph", "vc"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MixtureError {
    #[error("dataset {0:?} is not present in the store")]
    MissingDataset(String),
    #[error("dataset {dataset:?} has no {split} examples")]
    EmptySplit { dataset: String, split: Split },
    #[error("mixture needs at least one member")]
    NoMembers,
    #[error("dataset {0:?} listed twice")]
    DuplicateMember(String),
    #[error("mixture size {k} outside 1..={pool}")]
    BadArity { k: usize, pool: usize },
    #[error("unknown mixture abbreviation {0:?}")]
    UnknownAbbrev(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Concatenate every member split, then shuffle.
    #[default]
    Concat,
    /// Each draw picks a member uniformly, then an example uniformly within it.
    PerEpochUniform,
}

impl FromStr for Sampling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concat" => Ok(Self::Concat),
            "per_epoch_uniform" | "per-epoch-uniform" | "uniform" => Ok(Self::PerEpochUniform),
            other => Err(format!("unknown sampling {other:?}")),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Concat => "concat",
            Self::PerEpochUniform => "per_epoch_uniform",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub name: String,
    /// Dataset keys, sorted.
    pub members: Vec<String>,
    pub sampling: Sampling,
    pub seed: u64,
    pub label_space: LabelSpace,
}

pub fn abbrev(key: &str) -> String {
    descriptor(key).map(|d| d.abbrev.to_string()).unwrap_or_else(|| key.to_ascii_uppercase())
}

/// Canonical mixture name: member abbreviations, alphabetized by key, joined by " + ".
pub fn canonical_name<S: AsRef<str>>(members: &[S]) -> String {
    let mut keys: Vec<&str> = members.iter().map(AsRef::as_ref).collect();
    keys.sort_unstable();
    keys.iter().map(|k| abbrev(k)).collect::<Vec<_>>().join(" + ")
}

/// Parses a table row name such as "FV + NGT + FK" into its set of dataset keys.
pub fn parse_mixture_name(name: &str) -> Result<BTreeSet<String>, MixtureError> {
    let reg = registry();
    name.split('+')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|ab| {
            reg.iter()
                .find(|d| d.abbrev.eq_ignore_ascii_case(ab))
                .map(|d| d.key.to_string())
                .ok_or_else(|| MixtureError::UnknownAbbrev(ab.to_string()))
        })
        .collect()
}

impl MixtureSpec {
    /// Builds a spec whose label space is the union of the registry label
    /// spaces of its members. Unknown keys need [`MixtureSpec::with_store`].
    pub fn new<S: AsRef<str>>(members: &[S], sampling: Sampling, seed: u64) -> Result<Self, MixtureError> {
        Self::build_spec(members, sampling, seed, |k| descriptor(k).map(|d| d.label_space))
    }

    /// Like [`MixtureSpec::new`], but resolves label spaces through the store
    /// so synthetic datasets outside the registry can participate.
    pub fn with_store<S: AsRef<str>>(
        members: &[S],
        sampling: Sampling,
        seed: u64,
        store: &DatasetStore,
    ) -> Result<Self, MixtureError> {
        Self::build_spec(members, sampling, seed, |k| store.label_space(k))
    }

    fn build_spec<S: AsRef<str>>(
        members: &[S],
        sampling: Sampling,
        seed: u64,
        space_of: impl Fn(&str) -> Option<LabelSpace>,
    ) -> Result<Self, MixtureError> {
        if members.is_empty() {
            return Err(MixtureError::NoMembers);
        }
        let mut keys: Vec<String> = members.iter().map(|m| m.as_ref().to_string()).collect();
        keys.sort();
        if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
            return Err(MixtureError::DuplicateMember(w[0].clone()));
        }
        let mut label_space = LabelSpace::new();
        for k in &keys {
            let space = space_of(k).ok_or_else(|| MixtureError::MissingDataset(k.clone()))?;
            label_space.extend(space);
        }
        Ok(Self { name: canonical_name(&keys), members: keys, sampling, seed, label_space })
    }

    pub fn member_set(&self) -> BTreeSet<String> {
        self.members.iter().cloned().collect()
    }
}

fn member_split<'a>(
    store: &'a DatasetStore,
    key: &str,
    split: Split,
) -> Result<&'a [VerificationExample], MixtureError> {
    if !store.contains(key) {
        return Err(MixtureError::MissingDataset(key.to_string()));
    }
    match store.split(key, split) {
        Some(xs) if !xs.is_empty() => Ok(xs),
        _ => Err(MixtureError::EmptySplit { dataset: key.to_string(), split }),
    }
}

fn split_salt(split: Split) -> u64 {
    match split {
        Split::Train => 0,
        Split::Val => 0x5645_4c00,
        Split::Test => 0x5445_5354,
    }
}

/// Materializes the mixture stream for one split (epoch 0).
pub fn build(spec: &MixtureSpec, store: &DatasetStore, split: Split) -> Result<Vec<VerificationExample>, MixtureError> {
    build_epoch(spec, store, split, 0)
}

/// Materializes the stream for a given epoch. Concat streams are the same
/// multiset every epoch; uniform streams redraw per epoch.
pub fn build_epoch(
    spec: &MixtureSpec,
    store: &DatasetStore,
    split: Split,
    epoch: u64,
) -> Result<Vec<VerificationExample>, MixtureError> {
    let parts = spec
        .members
        .iter()
        .map(|k| member_split(store, k, split))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ split_salt(split));
    rng.set_stream(epoch);

    match spec.sampling {
        Sampling::PerEpochUniform if split == Split::Train => {
            let total: usize = parts.iter().map(|p| p.len()).sum();
            Ok((0..total)
                .map(|_| {
                    let part = parts[rng.random_range(0..parts.len())];
                    part[rng.random_range(0..part.len())].clone()
                })
                .collect())
        }
        _ => {
            let mut out: Vec<VerificationExample> = parts.iter().flat_map(|p| p.iter().cloned()).collect();
            out.shuffle(&mut rng);
            Ok(out)
        }
    }
}

/// Every size-`k` mixture over `pool`, in lexicographic order of sorted keys.
pub fn enumerate_mixtures<S: AsRef<str>>(k: usize, pool: &[S]) -> Result<Vec<MixtureSpec>, MixtureError> {
    let mut keys: Vec<String> = pool.iter().map(|s| s.as_ref().to_string()).collect();
    keys.sort();
    keys.dedup();
    if k == 0 || k > keys.len() {
        return Err(MixtureError::BadArity { k, pool: keys.len() });
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let members: Vec<&str> = idx.iter().map(|&i| keys[i].as_str()).collect();
        out.push(MixtureSpec::new(&members, Sampling::Concat, 0)?);
        // advance to the next combination
        let mut i = k;
        while i > 0 && idx[i - 1] == keys.len() - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(out)
}
