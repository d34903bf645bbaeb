use serde::Serialize;

use super::{binary_space, ternary_space, DomainTag, LabelSpace};

/// Known split sizes. `None` means the size is not recorded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitSizes {
    pub train: Option<u64>,
    pub val: Option<u64>,
    pub test: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetDescriptor {
    pub key: &'static str,
    pub name: &'static str,
    /// Row/column abbreviation used in mixture tables (e.g. "MC").
    pub abbrev: &'static str,
    pub domain: DomainTag,
    pub label_space: LabelSpace,
    pub has_evidence: bool,
    pub multimodal: bool,
    pub splits: SplitSizes,
    pub eval_set: bool,
    pub trainable: bool,
    pub requires_timestamp: bool,
}

struct Row {
    key: &'static str,
    name: &'static str,
    abbrev: &'static str,
    domain: DomainTag,
    ternary: bool,
    has_evidence: bool,
    multimodal: bool,
    train_size: Option<u64>,
    eval_set: bool,
    trainable: bool,
    requires_timestamp: bool,
}

use DomainTag::*;

const ROWS: &[Row] = &[
    Row { key: "fak", name: "Fakeddit", abbrev: "FK", domain: Misinformation, ternary: false, has_evidence: true, multimodal: true, train_size: Some(1_063_106), eval_set: true, trainable: true, requires_timestamp: false },
    Row { key: "ham", name: "HatefulMemes", abbrev: "HM", domain: Toxicity, ternary: false, has_evidence: true, multimodal: true, train_size: None, eval_set: true, trainable: false, requires_timestamp: false },
    Row { key: "hax", name: "HateXplain", abbrev: "HX", domain: Toxicity, ternary: false, has_evidence: false, multimodal: false, train_size: None, eval_set: true, trainable: true, requires_timestamp: false },
    Row { key: "mmh", name: "MMHS150K", abbrev: "MMHS", domain: Toxicity, ternary: false, has_evidence: true, multimodal: true, train_size: None, eval_set: true, trainable: false, requires_timestamp: false },
    Row { key: "moc", name: "Mocheg", abbrev: "MC", domain: Misinformation, ternary: true, has_evidence: true, multimodal: true, train_size: None, eval_set: true, trainable: true, requires_timestamp: false },
    Row { key: "mrf", name: "Misinfo Reaction Frames", abbrev: "MRF", domain: Misinformation, ternary: false, has_evidence: false, multimodal: false, train_size: None, eval_set: true, trainable: false, requires_timestamp: false },
    Row { key: "pre", name: "NELA-GT pre-vaccine", abbrev: "Pre-V", domain: Misinformation, ternary: false, has_evidence: false, multimodal: false, train_size: None, eval_set: true, trainable: false, requires_timestamp: true },
    Row { key: "pos", name: "NELA-GT post-vaccine", abbrev: "Post-V", domain: Misinformation, ternary: false, has_evidence: false, multimodal: false, train_size: None, eval_set: true, trainable: false, requires_timestamp: true },
    Row { key: "ukr", name: "NELA-GT Ukraine-Russia", abbrev: "U-R", domain: Misinformation, ternary: false, has_evidence: false, multimodal: false, train_size: None, eval_set: true, trainable: false, requires_timestamp: true },
    Row { key: "pst", name: "P-Stance", abbrev: "PS", domain: Stance, ternary: false, has_evidence: true, multimodal: false, train_size: None, eval_set: true, trainable: false, requires_timestamp: false },
    Row { key: "ph", name: "PubHealth", abbrev: "PH", domain: Misinformation, ternary: true, has_evidence: true, multimodal: false, train_size: None, eval_set: true, trainable: true, requires_timestamp: false },
    Row { key: "tox", name: "Toxigen", abbrev: "TX", domain: Toxicity, ternary: false, has_evidence: false, multimodal: false, train_size: None, eval_set: true, trainable: true, requires_timestamp: false },
    Row { key: "fv", name: "FEVER", abbrev: "FV", domain: Misinformation, ternary: true, has_evidence: true, multimodal: false, train_size: None, eval_set: false, trainable: true, requires_timestamp: false },
    Row { key: "vc", name: "VitaminC", abbrev: "VC", domain: Misinformation, ternary: true, has_evidence: true, multimodal: false, train_size: None, eval_set: false, trainable: true, requires_timestamp: false },
    Row { key: "ngt", name: "NELA-GT 2022", abbrev: "NGT", domain: Misinformation, ternary: false, has_evidence: false, multimodal: false, train_size: None, eval_set: false, trainable: true, requires_timestamp: true },
];

fn build(row: &Row) -> DatasetDescriptor {
    DatasetDescriptor {
        key: row.key,
        name: row.name,
        abbrev: row.abbrev,
        domain: row.domain,
        label_space: if row.ternary { ternary_space() } else { binary_space() },
        has_evidence: row.has_evidence,
        multimodal: row.multimodal,
        splits: SplitSizes { train: row.train_size, val: None, test: None },
        eval_set: row.eval_set,
        trainable: row.trainable,
        requires_timestamp: row.requires_timestamp,
    }
}

/// Every known dataset, evaluation sets first in their canonical order.
pub fn registry() -> Vec<DatasetDescriptor> {
    ROWS.iter().map(build).collect()
}

pub fn descriptor(key: &str) -> Option<DatasetDescriptor> {
    ROWS.iter().find(|r| r.key == key).map(build)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::VeracityLabel;

    #[test]
    fn twelve_eval_keys() {
        let keys: Vec<_> = registry().into_iter().filter(|d| d.eval_set).map(|d| d.key).collect();
        assert_eq!(
            keys,
            ["fak", "ham", "hax", "mmh", "moc", "mrf", "pre", "pos", "ukr", "pst", "ph", "tox"]
        );
    }

    #[test]
    fn fakeddit_metadata() {
        let fak = descriptor("fak").unwrap();
        assert_eq!(fak.splits.train, Some(1_063_106));
        assert!(!fak.label_space.contains(&VeracityLabel::Nei));
        assert!(fak.multimodal);
    }

    #[test]
    fn mocheg_is_ternary() {
        let moc = descriptor("moc").unwrap();
        assert_eq!(moc.label_space, ternary_space());
    }

    #[test]
    fn hateful_memes_binary_multimodal() {
        let ham = descriptor("ham").unwrap();
        assert_eq!(ham.label_space, binary_space());
        assert!(ham.multimodal);
    }

    #[test]
    fn multimodal_set_is_exact() {
        let mm: Vec<_> = registry().into_iter().filter(|d| d.multimodal).map(|d| d.key).collect();
        assert_eq!(mm, ["fak", "ham", "mmh", "moc"]);
    }

    #[test]
    fn keys_and_abbrevs_unique() {
        let reg = registry();
        let mut keys: Vec<_> = reg.iter().map(|d| d.key).collect();
        let mut abbrevs: Vec<_> = reg.iter().map(|d| d.abbrev).collect();
        keys.sort();
        keys.dedup();
        abbrevs.sort();
        abbrevs.dedup();
        assert_eq!(keys.len(), reg.len());
        assert_eq!(abbrevs.len(), reg.len());
    }
}
