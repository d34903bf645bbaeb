use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{descriptor, jsonl, LabelSpace, SchemaError, Split, VerificationExample};

/// Normalized examples grouped by dataset key and split.
///
/// A store on disk is any directory of unified JSONL files; records are
/// grouped by their own `dataset` and `split` fields.
#[derive(Debug, Clone, Default)]
pub struct DatasetStore {
    data: BTreeMap<String, BTreeMap<Split, Vec<VerificationExample>>>,
}

impl DatasetStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_examples<I>(examples: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = VerificationExample>,
    {
        let mut store = Self::new();
        for ex in examples {
            store.insert(ex);
        }
        store.check_ids()?;
        Ok(store)
    }

    pub fn load(dir: &Path) -> Result<Self, SchemaError> {
        let io_err = |source| SchemaError::Io { path: dir.display().to_string(), source };
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut store = Self::new();
        for file in files {
            for ex in jsonl::read_jsonl(&file, false)? {
                store.insert(ex);
            }
        }
        store.check_ids()?;
        Ok(store)
    }

    pub fn insert(&mut self, ex: VerificationExample) {
        self.data.entry(ex.dataset.clone()).or_default().entry(ex.split).or_default().push(ex);
    }

    /// Ids must be unique per (dataset, split) and never shared across splits.
    pub fn check_ids(&self) -> Result<(), SchemaError> {
        for (key, splits) in &self.data {
            let mut seen: HashMap<&str, Split> = HashMap::new();
            for (split, examples) in splits {
                for ex in examples {
                    if let Some(prev) = seen.insert(ex.id.as_str(), *split) {
                        return Err(SchemaError::SchemaViolation(format!(
                            "{key}: id {:?} appears in {prev} and {split}",
                            ex.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn datasets(&self) -> impl Iterator<Item = &str> {
        self.data.keys().map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.data.contains_key(key)
    }

    pub fn split(&self, key: &str, split: Split) -> Option<&[VerificationExample]> {
        self.data.get(key)?.get(&split).map(Vec::as_slice)
    }

    pub fn all(&self) -> impl Iterator<Item = &VerificationExample> {
        self.data.values().flat_map(|s| s.values().flatten())
    }

    /// Registry label space for known keys; otherwise the labels observed in the store.
    pub fn label_space(&self, key: &str) -> Option<LabelSpace> {
        if let Some(d) = descriptor(key) {
            return Some(d.label_space);
        }
        let splits = self.data.get(key)?;
        Some(splits.values().flatten().map(|e| e.label).collect())
    }

    pub fn len(&self) -> usize {
        self.data.values().flat_map(|s| s.values()).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes one `<dataset>.jsonl` per dataset into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), SchemaError> {
        std::fs::create_dir_all(dir)
            .map_err(|source| SchemaError::Io { path: dir.display().to_string(), source })?;
        for (key, splits) in &self.data {
            jsonl::write_jsonl(&dir.join(format!("{key}.jsonl")), splits.values().flatten())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{DomainTag, VeracityLabel};

    fn ex(id: &str, split: Split) -> VerificationExample {
        VerificationExample {
            id: id.into(),
            claim: "c".into(),
            evidence: vec![],
            label: VeracityLabel::Supported,
            dataset: "moc".into(),
            domain: DomainTag::Misinformation,
            split,
            timestamp: None,
        }
    }

    #[test]
    fn cross_split_ids_rejected() {
        let err = DatasetStore::from_examples([ex("a", Split::Train), ex("a", Split::Test)]);
        assert!(err.is_err());
        assert!(DatasetStore::from_examples([ex("a", Split::Train), ex("b", Split::Test)]).is_ok());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let store = DatasetStore::from_examples([ex("a", Split::Train), ex("b", Split::Val)]).unwrap();
        store.save(dir.path()).unwrap();
        let back = DatasetStore::load(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.split("moc", Split::Val).unwrap()[0].id, "b");
    }
}
