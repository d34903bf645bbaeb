use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::prompt::ZERO_SHOT_HEADER;
use crate::schema::VeracityLabel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    /// Worth retrying: rate limits, timeouts, 5xx.
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for ClientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Transient(m) => write!(f, "transient: {m}"),
            Self::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

pub trait LlmClient: Send + Sync {
    /// Generator name stamped on every record.
    fn name(&self) -> &str;
    fn complete(&self, system: &str, user: &str) -> Result<String, ClientError>;
}

/// Offline client. Explanation prompts get `STUB[<label>]: <claim>`; zero-shot
/// prompts get the configured label or one derived from the claim hash.
#[derive(Debug, Default)]
pub struct StubClient {
    pub zero_shot: Option<VeracityLabel>,
    calls: AtomicUsize,
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let to = text[from..].find(end).map_or(text.len(), |i| from + i);
    Some(&text[from..to])
}

impl StubClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn answering(label: VeracityLabel) -> Self {
        Self { zero_shot: Some(label), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmClient for StubClient {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, _system: &str, user: &str) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let claim = between(user, "Claim: ", "\n\nEvidence: ").ok_or_else(|| ClientError::Fatal("no claim in prompt".into()))?;
        if user.starts_with(ZERO_SHOT_HEADER) {
            let label = self.zero_shot.unwrap_or_else(|| {
                let d = Sha256::digest(claim.as_bytes());
                VeracityLabel::ALL[(d[0] % 3) as usize]
            });
            return Ok(label.word().to_string());
        }
        let label = between(user, "Relationship: ", "\n").ok_or_else(|| ClientError::Fatal("no relationship in prompt".into()))?;
        Ok(format!("STUB[{label}]: {claim}"))
    }
}

/// Wraps a client and fails a seeded fraction of calls with a transient error.
pub struct FlakyClient<C> {
    inner: C,
    failure_rate: f64,
    seed: u64,
    counter: AtomicU64,
    failures: AtomicUsize,
}

impl<C: LlmClient> FlakyClient<C> {
    pub fn new(inner: C, failure_rate: f64, seed: u64) -> Self {
        Self { inner, failure_rate, seed, counter: AtomicU64::new(0), failures: AtomicUsize::new(0) }
    }

    pub fn failures(&self) -> usize {
        self.failures.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: LlmClient> LlmClient for FlakyClient<C> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, ClientError> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(n.to_le_bytes());
        let d = h.finalize();
        let u = u64::from_le_bytes(d[..8].try_into().unwrap()) as f64 / u64::MAX as f64;
        if u < self.failure_rate {
            self.failures.fetch_add(1, Ordering::SeqCst);
            return Err(ClientError::Transient(format!("injected failure on call {n}")));
        }
        self.inner.complete(system, user)
    }
}

/// Chat-completions client for OpenAI-compatible endpoints.
pub struct OpenAiClient {
    model: String,
    api_key: String,
    base_url: String,
    agent: ureq::Agent,
}

pub const API_KEY_ENV: &str = "OPENAI_API_KEY";
pub const BASE_URL_ENV: &str = "OPENAI_BASE_URL";

impl OpenAiClient {
    /// Reads the key from `OPENAI_API_KEY` and an optional `OPENAI_BASE_URL`.
    pub fn from_env(model: &str, timeout: Duration) -> Result<Self, ClientError> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| ClientError::Fatal(format!("{API_KEY_ENV} is not set")))?;
        let base_url = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| "https://api.openai.com/v1".into());
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Ok(Self { model: model.into(), api_key, base_url: base_url.trim_end_matches('/').into(), agent })
    }
}

impl LlmClient for OpenAiClient {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, ClientError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let resp = self
            .agent
            .post(format!("{}/chat/completions", self.base_url))
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(&body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                return Err(ClientError::Transient(format!("HTTP {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => return Err(ClientError::Fatal(format!("HTTP {code}"))),
            Err(e @ (ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed)) => {
                return Err(ClientError::Transient(e.to_string()))
            }
            Err(e) => return Err(ClientError::Fatal(e.to_string())),
        };
        let v: Value = resp.body_mut().read_json().map_err(|e| ClientError::Transient(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.trim().to_string())
            .ok_or_else(|| ClientError::Fatal("response has no message content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::prompt::{build_prompt, zero_shot_prompt};

    #[test]
    fn stub_contract() {
        let stub = StubClient::new();
        let p = build_prompt("Moon is cheese", "NASA says no", VeracityLabel::Refuted).unwrap();
        assert_eq!(stub.complete(&p.system, &p.user).unwrap(), "STUB[refuted]: Moon is cheese");
        let z = zero_shot_prompt("Moon is cheese", "NASA says no").unwrap();
        let fixed = StubClient::answering(VeracityLabel::Refuted);
        assert_eq!(fixed.complete(&z.system, &z.user).unwrap(), "refuted");
        assert_eq!(stub.complete(&z.system, &z.user).unwrap(), stub.complete(&z.system, &z.user).unwrap());
    }

    #[test]
    fn flaky_fails_about_the_requested_fraction() {
        let flaky = FlakyClient::new(StubClient::new(), 0.1, 3);
        let p = build_prompt("c", "e", VeracityLabel::Nei).unwrap();
        let failed = (0..2000).filter(|_| flaky.complete(&p.system, &p.user).is_err()).count();
        assert!((120..280).contains(&failed), "{failed}");
    }
}
