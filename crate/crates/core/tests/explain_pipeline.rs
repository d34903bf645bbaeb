use std::sync::atomic::{AtomicUsize, Ordering};

use factmix::explain::{
    ClientError, ExplainError, ExplanationCache, ExplanationRequest, FlakyClient, GenerateConfig, LlmClient, Scenario,
    Session, StubClient,
};
use factmix::schema::VeracityLabel;

fn requests(n: usize) -> Vec<ExplanationRequest> {
    (0..n)
        .map(|i| ExplanationRequest {
            claim_id: format!("c{i:03}"),
            claim: format!("claim number {i}"),
            evidence: format!("evidence for {i}"),
            label: VeracityLabel::ALL[i % 3],
            scenario: Scenario::Oracle,
        })
        .collect()
}

fn fast() -> GenerateConfig {
    GenerateConfig { base_backoff_ms: 1, max_backoff_ms: 4, max_retries: 8, ..GenerateConfig::default() }
}

#[test]
fn transient_failures_are_retried_until_every_request_resolves() {
    let client = FlakyClient::new(StubClient::new(), 0.1, 7);
    let cache = ExplanationCache::in_memory();
    let session = Session::new(&client, &cache, fast());
    let reqs = requests(50);
    let out = session.generate(&reqs).unwrap();
    assert_eq!(out.len(), 50);
    for (rec, req) in out.iter().zip(&reqs) {
        assert_eq!(rec.claim_id, req.claim_id);
        assert_eq!(rec.label, req.label);
        assert!(rec.text.contains(&req.claim));
    }
    let stats = session.stats();
    assert!(client.failures() > 0, "fault injection never fired");
    assert_eq!(stats.retries, client.failures());
    assert_eq!(stats.client_calls, 50 + client.failures());
    assert_eq!(client.inner().calls(), 50);
}

#[test]
fn second_run_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let reqs = requests(12);
    let first = {
        let client = StubClient::new();
        let cache = ExplanationCache::open(&path).unwrap();
        let out = Session::new(&client, &cache, fast()).generate(&reqs).unwrap();
        cache.persist().unwrap();
        out
    };
    let client = StubClient::new();
    let cache = ExplanationCache::open(&path).unwrap();
    assert_eq!(cache.len(), 12);
    let session = Session::new(&client, &cache, GenerateConfig { budget: Some(0), ..fast() });
    let second = session.generate(&reqs).unwrap();
    assert_eq!(client.calls(), 0);
    assert_eq!(session.stats().cache_hits, 12);
    let texts = |v: &[factmix::explain::ExplanationRecord]| v.iter().map(|r| r.text.clone()).collect::<Vec<_>>();
    assert_eq!(texts(&first), texts(&second));
}

#[test]
fn budget_is_checked_before_any_request() {
    let client = StubClient::new();
    let cache = ExplanationCache::in_memory();
    let session = Session::new(&client, &cache, GenerateConfig { budget: Some(5), ..fast() });
    let err = session.generate(&requests(6)).unwrap_err();
    assert!(matches!(err, ExplainError::BudgetExceeded { budget: 5, needed: 6 }));
    assert_eq!(client.calls(), 0);
}

struct Broken(AtomicUsize);

impl LlmClient for Broken {
    fn name(&self) -> &str {
        "broken"
    }

    fn complete(&self, _: &str, _: &str) -> Result<String, ClientError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(ClientError::Fatal("401 unauthorized".into()))
    }
}

#[test]
fn fatal_errors_are_not_retried() {
    let client = Broken(AtomicUsize::new(0));
    let cache = ExplanationCache::in_memory();
    let session = Session::new(&client, &cache, GenerateConfig { concurrency: 1, ..fast() });
    let err = session.generate(&requests(1)).unwrap_err();
    assert!(matches!(err, ExplainError::Client { attempts: 1, .. }));
    assert_eq!(client.0.load(Ordering::SeqCst), 1);
}

#[test]
fn duplicate_requests_hit_the_client_once() {
    let client = StubClient::new();
    let cache = ExplanationCache::in_memory();
    let mut reqs = requests(3);
    reqs.extend(requests(3));
    let out = Session::new(&client, &cache, fast()).generate(&reqs).unwrap();
    assert_eq!(out.len(), 6);
    assert_eq!(client.calls(), 3);
}
