use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::client::{ClientError, LlmClient};
use super::prompt::{build_prompt, parse_zero_shot, prompt_hash, zero_shot_prompt, Prompt};
use super::{ClaimView, ExplainError, ExplanationRecord, Scenario};
use crate::schema::VeracityLabel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplanationRequest {
    pub claim_id: String,
    pub claim: String,
    pub evidence: String,
    pub label: VeracityLabel,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub concurrency: usize,
    pub max_retries: u32,
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Cap on uncached client requests for the whole session; retries are free.
    pub budget: Option<usize>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { concurrency: 4, max_retries: 5, base_backoff_ms: 200, max_backoff_ms: 10_000, budget: None }
    }
}

impl GenerateConfig {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.base_backoff_ms.saturating_mul(1u64 << attempt.min(20));
        Duration::from_millis(ms.min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateStats {
    pub requests: usize,
    pub client_calls: usize,
    pub retries: usize,
    pub cache_hits: usize,
    pub word_limit_warnings: usize,
    pub unparsed_zero_shot: usize,
}

type CacheKey = (String, VeracityLabel, String, String);

/// Explanation store keyed by (claim id, label, generator, prompt hash),
/// optionally backed by a JSONL file.
#[derive(Debug, Default)]
pub struct ExplanationCache {
    map: Mutex<HashMap<CacheKey, ExplanationRecord>>,
    path: Option<PathBuf>,
}

fn key_of(r: &ExplanationRecord) -> CacheKey {
    (r.claim_id.clone(), r.label, r.generator.clone(), r.prompt_hash.clone())
}

impl ExplanationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, ExplainError> {
        let mut map = HashMap::new();
        match fs::read_to_string(path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let rec: ExplanationRecord = serde_json::from_str(line)
                        .map_err(|e| ExplainError::Cache(format!("{}:{}: {e}", path.display(), i + 1)))?;
                    map.insert(key_of(&rec), rec);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(source) => return Err(ExplainError::Io { path: path.display().to_string(), source }),
        }
        Ok(Self { map: Mutex::new(map), path: Some(path.to_path_buf()) })
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &CacheKey) -> Option<ExplanationRecord> {
        self.map.lock().unwrap().get(key).cloned()
    }

    /// Last writer wins; identical keys carry identical prompts.
    fn insert(&self, rec: ExplanationRecord) {
        self.map.lock().unwrap().insert(key_of(&rec), rec);
    }

    pub fn records(&self) -> Vec<ExplanationRecord> {
        let map = self.map.lock().unwrap();
        let sorted: BTreeMap<_, _> = map.iter().map(|(k, v)| ((k.0.clone(), k.1, k.2.clone(), k.3.clone()), v.clone())).collect();
        sorted.into_values().collect()
    }

    /// Rewrites the backing file in key order.
    pub fn persist(&self) -> Result<(), ExplainError> {
        let Some(path) = &self.path else { return Ok(()) };
        let io = |source| ExplainError::Io { path: path.display().to_string(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        for rec in self.records() {
            writeln!(f, "{}", serde_json::to_string(&rec).expect("record serializes")).map_err(io)?;
        }
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}

/// Client, cache, config and running counters for one explain invocation.
pub struct Session<'a> {
    pub client: &'a dyn LlmClient,
    pub cache: &'a ExplanationCache,
    pub config: GenerateConfig,
    requests: AtomicUsize,
    client_calls: AtomicUsize,
    retries: AtomicUsize,
    cache_hits: AtomicUsize,
    word_limit_warnings: AtomicUsize,
    unparsed_zero_shot: AtomicUsize,
    issued: AtomicUsize,
}

impl<'a> Session<'a> {
    pub fn new(client: &'a dyn LlmClient, cache: &'a ExplanationCache, config: GenerateConfig) -> Self {
        Self {
            client,
            cache,
            config,
            requests: AtomicUsize::new(0),
            client_calls: AtomicUsize::new(0),
            retries: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            word_limit_warnings: AtomicUsize::new(0),
            unparsed_zero_shot: AtomicUsize::new(0),
            issued: AtomicUsize::new(0),
        }
    }

    pub fn stats(&self) -> GenerateStats {
        GenerateStats {
            requests: self.requests.load(Ordering::SeqCst),
            client_calls: self.client_calls.load(Ordering::SeqCst),
            retries: self.retries.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            word_limit_warnings: self.word_limit_warnings.load(Ordering::SeqCst),
            unparsed_zero_shot: self.unparsed_zero_shot.load(Ordering::SeqCst),
        }
    }

    fn reserve(&self, needed: usize) -> Result<(), ExplainError> {
        if let Some(budget) = self.config.budget {
            let used = self.issued.load(Ordering::SeqCst);
            if used + needed > budget {
                return Err(ExplainError::BudgetExceeded { budget, needed });
            }
        }
        self.issued.fetch_add(needed, Ordering::SeqCst);
        Ok(())
    }

    fn complete_with_retry(&self, prompt: &Prompt) -> Result<String, ExplainError> {
        let mut attempt = 0;
        loop {
            self.client_calls.fetch_add(1, Ordering::SeqCst);
            match self.client.complete(&prompt.system, &prompt.user) {
                Ok(text) => return Ok(text),
                Err(ClientError::Transient(msg)) if attempt < self.config.max_retries => {
                    let wait = self.config.backoff(attempt);
                    log::warn!("transient LLM error ({msg}); retry {} in {:?}", attempt + 1, wait);
                    self.retries.fetch_add(1, Ordering::SeqCst);
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(ExplainError::Client { attempts: attempt + 1, message: e.to_string() }),
            }
        }
    }

    /// Runs `jobs` on up to `concurrency` scoped worker threads, keeping input order.
    fn run_parallel<T, R, F>(&self, jobs: &[T], f: F) -> Vec<Result<R, ExplainError>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R, ExplainError> + Sync,
    {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<R, ExplainError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.config.concurrency.max(1).min(jobs.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= jobs.len() {
                        break;
                    }
                    *slots[i].lock().unwrap() = Some(f(&jobs[i]));
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().unwrap().expect("every job ran")).collect()
    }

    /// Produces one record per request, in request order. Cached keys are
    /// never re-requested and duplicate keys in a batch are requested once.
    pub fn generate(&self, requests: &[ExplanationRequest]) -> Result<Vec<ExplanationRecord>, ExplainError> {
        let generator = self.client.name().to_string();
        let mut keyed = Vec::with_capacity(requests.len());
        let mut pending: Vec<(CacheKey, Prompt, &ExplanationRequest)> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for req in requests {
            let prompt = build_prompt(&req.claim, &req.evidence, req.label)?;
            let key = (req.claim_id.clone(), req.label, generator.clone(), prompt_hash(&prompt));
            if self.cache.get(&key).is_none() && seen.insert(key.clone()) {
                pending.push((key.clone(), prompt, req));
            }
            keyed.push(key);
        }
        self.requests.fetch_add(requests.len(), Ordering::SeqCst);
        self.reserve(pending.len())?;

        let results = self.run_parallel(&pending, |(key, prompt, req)| {
            let text = self.complete_with_retry(prompt)?;
            let rec = ExplanationRecord {
                claim_id: key.0.clone(),
                label: key.1,
                scenario: req.scenario,
                generator: key.2.clone(),
                text,
                prompt_hash: key.3.clone(),
                cached: false,
            };
            if rec.text.trim().is_empty() {
                return Err(ExplainError::Client { attempts: 1, message: format!("empty explanation for {}", rec.claim_id) });
            }
            if rec.over_word_limit() {
                log::warn!("explanation for {} has {} words", rec.claim_id, rec.word_count());
                self.word_limit_warnings.fetch_add(1, Ordering::SeqCst);
            }
            self.cache.insert(rec.clone());
            Ok(key.clone())
        });
        let fresh: std::collections::HashSet<CacheKey> = results.into_iter().collect::<Result<_, _>>()?;

        let mut out = Vec::with_capacity(keyed.len());
        let mut first_use = std::collections::HashSet::new();
        for (key, req) in keyed.into_iter().zip(requests) {
            let mut rec = self.cache.get(&key).expect("generated or cached");
            rec.scenario = req.scenario;
            rec.cached = !(fresh.contains(&key) && first_use.insert(key));
            if rec.cached {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
            }
            out.push(rec);
        }
        Ok(out)
    }

    /// The generator's own verdict for each claim. Unparseable replies count
    /// as nei and bump the warning counter.
    pub fn zero_shot(&self, claims: &[ClaimView<'_>]) -> Result<Vec<VeracityLabel>, ExplainError> {
        self.reserve(claims.len())?;
        let prompts = claims
            .iter()
            .map(|c| zero_shot_prompt(c.claim, &c.text_evidence()))
            .collect::<Result<Vec<_>, _>>()?;
        self.run_parallel(&prompts, |p| {
            let reply = self.complete_with_retry(p)?;
            Ok(parse_zero_shot(&reply).unwrap_or_else(|| {
                log::warn!("unparseable zero-shot reply {reply:?}; using nei");
                self.unparsed_zero_shot.fetch_add(1, Ordering::SeqCst);
                VeracityLabel::Nei
            }))
        })
        .into_iter()
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::client::{FlakyClient, StubClient};

    fn req(id: &str, label: VeracityLabel) -> ExplanationRequest {
        ExplanationRequest { claim_id: id.into(), claim: format!("claim {id}"), evidence: "ev".into(), label, scenario: Scenario::Guided }
    }

    fn fast() -> GenerateConfig {
        GenerateConfig { base_backoff_ms: 0, max_backoff_ms: 0, ..GenerateConfig::default() }
    }

    #[test]
    fn second_request_is_cached() {
        let stub = StubClient::new();
        let cache = ExplanationCache::in_memory();
        let s = Session::new(&stub, &cache, fast());
        let first = s.generate(&[req("a", VeracityLabel::Supported)]).unwrap();
        assert!(!first[0].cached);
        assert_eq!(first[0].text, "STUB[supported]: claim a");
        let second = s.generate(&[req("a", VeracityLabel::Supported)]).unwrap();
        assert!(second[0].cached);
        assert_eq!(stub.calls(), 1);
    }

    #[test]
    fn duplicates_in_batch_requested_once() {
        let stub = StubClient::new();
        let cache = ExplanationCache::in_memory();
        let s = Session::new(&stub, &cache, fast());
        let out = s.generate(&[req("a", VeracityLabel::Nei), req("a", VeracityLabel::Nei)]).unwrap();
        assert_eq!(stub.calls(), 1);
        assert_eq!((out[0].cached, out[1].cached), (false, true));
    }

    #[test]
    fn budget_is_enforced_before_calling() {
        let stub = StubClient::new();
        let cache = ExplanationCache::in_memory();
        let s = Session::new(&stub, &cache, GenerateConfig { budget: Some(1), ..fast() });
        let err = s.generate(&[req("a", VeracityLabel::Nei), req("b", VeracityLabel::Nei)]).unwrap_err();
        assert!(matches!(err, ExplainError::BudgetExceeded { budget: 1, needed: 2 }));
        assert_eq!(stub.calls(), 0);
    }

    #[test]
    fn retries_are_capped() {
        let flaky = FlakyClient::new(StubClient::new(), 1.0, 0);
        let cache = ExplanationCache::in_memory();
        let s = Session::new(&flaky, &cache, GenerateConfig { max_retries: 2, ..fast() });
        let err = s.generate(&[req("a", VeracityLabel::Nei)]).unwrap_err();
        assert!(matches!(err, ExplainError::Client { attempts: 3, .. }));
        assert_eq!(s.stats().retries, 2);
    }

    #[test]
    fn cache_persists_as_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("explanations.jsonl");
        let stub = StubClient::new();
        {
            let cache = ExplanationCache::open(&path).unwrap();
            Session::new(&stub, &cache, fast()).generate(&[req("a", VeracityLabel::Refuted)]).unwrap();
            cache.persist().unwrap();
        }
        let line = fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 6);
        for k in ["claim_id", "label", "scenario", "generator", "text", "prompt_hash"] {
            assert!(keys.contains(&k));
        }
        let cache = ExplanationCache::open(&path).unwrap();
        let out = Session::new(&stub, &cache, fast()).generate(&[req("a", VeracityLabel::Refuted)]).unwrap();
        assert!(out[0].cached);
        assert_eq!(stub.calls(), 1);
    }

    #[test]
    fn backoff_grows_and_caps() {
        let cfg = GenerateConfig { base_backoff_ms: 100, max_backoff_ms: 1000, ..GenerateConfig::default() };
        assert_eq!(cfg.backoff(0), Duration::from_millis(100));
        assert_eq!(cfg.backoff(2), Duration::from_millis(400));
        assert_eq!(cfg.backoff(9), Duration::from_millis(1000));
    }
}
