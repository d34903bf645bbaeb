//! Encoder backends. Only the toy backend ships in-tree; the CLIP and LLaVA
//! names are recognized so configs can refer to them, and a plugin factory
//! can be registered to provide the actual encoder.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::VerifierError;
use crate::schema::{EvidenceItem, EvidenceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackendName {
    #[serde(rename = "toy")]
    Toy,
    #[serde(rename = "clip-base")]
    ClipBase,
    #[serde(rename = "clip-large")]
    ClipLarge,
    #[serde(rename = "clip-large-336")]
    ClipLarge336,
    #[serde(rename = "llava")]
    Llava,
}

impl BackendName {
    pub const ALL: [BackendName; 5] =
        [Self::Toy, Self::ClipBase, Self::ClipLarge, Self::ClipLarge336, Self::Llava];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Toy => "toy",
            Self::ClipBase => "clip-base",
            Self::ClipLarge => "clip-large",
            Self::ClipLarge336 => "clip-large-336",
            Self::Llava => "llava",
        }
    }

    /// Public checkpoint identifier the backend loads.
    pub fn checkpoint(self) -> Option<&'static str> {
        match self {
            Self::Toy => None,
            Self::ClipBase => Some("openai/clip-vit-base-patch32"),
            Self::ClipLarge => Some("openai/clip-vit-large-patch14"),
            Self::ClipLarge336 => Some("openai/clip-vit-large-patch14-336"),
            Self::Llava => Some("llava-hf/llava-v1.6-mistral-7b-hf"),
        }
    }

    /// Joint embedding width of the backend.
    pub fn default_embed_dim(self) -> usize {
        match self {
            Self::Toy => 64,
            Self::ClipBase => 512,
            Self::ClipLarge | Self::ClipLarge336 => 768,
            Self::Llava => 4096,
        }
    }
}

impl fmt::Display for BackendName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendName {
    type Err = VerifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| VerifierError::BackendUnavailable(format!("unknown backend {s:?}")))
    }
}

/// Fine-tuning settings recorded for the LLaVA plugin; the in-tree trainer
/// does not use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraPluginConfig {
    pub rank: u32,
    pub alpha: u32,
    pub dropout: f64,
    pub target: String,
    pub lr: f64,
    pub optimizer: String,
    pub scheduler: String,
    pub max_seq_len: u32,
    pub batch_size: u32,
    pub micro_batch: u32,
    pub precision: String,
}

impl Default for LoraPluginConfig {
    fn default() -> Self {
        Self {
            rank: 64,
            alpha: 16,
            dropout: 0.05,
            target: "all-linear".into(),
            lr: 2e-5,
            optimizer: "adamw".into(),
            scheduler: "cosine".into(),
            max_seq_len: 2048,
            batch_size: 32,
            micro_batch: 1,
            precision: "bf16".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub text: bool,
    pub image: bool,
}

/// Claim embedding plus one embedding per evidence item, in evidence order.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub claim: Vec<f64>,
    pub evidence: Vec<Vec<f64>>,
}

pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;
    fn embed_dim(&self) -> usize;
    fn capabilities(&self) -> Capabilities;
    fn encode_text(&self, text: &str) -> Result<Vec<f64>, VerifierError>;
    fn encode_image(&self, reference: &str) -> Result<Vec<f64>, VerifierError>;

    /// Encodes the claim and each evidence item separately. Text and image
    /// evidence of one example stay separate items.
    fn encode(&self, claim: &str, evidence: &[EvidenceItem]) -> Result<Encoded, VerifierError> {
        let caps = self.capabilities();
        if !caps.text {
            return Err(VerifierError::UnsupportedModality { backend: self.name().into(), kind: "text" });
        }
        let claim = self.encode_text(claim)?;
        let evidence = evidence
            .iter()
            .map(|item| match item.kind {
                EvidenceKind::Text => self.encode_text(&item.content),
                EvidenceKind::Image if caps.image => self.encode_image(&item.content),
                EvidenceKind::Image => {
                    Err(VerifierError::UnsupportedModality { backend: self.name().into(), kind: "image" })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Encoded { claim, evidence })
    }
}

/// Deterministic hashed bag-of-tokens encoder. Each token maps to a fixed
/// pseudo-random direction derived from (seed, modality, token bytes); an
/// input embeds to the normalized sum of its token directions plus a bias
/// direction, so every output has unit norm.
#[derive(Debug, Clone)]
pub struct ToyBackend {
    seed: u64,
    dim: usize,
    images: bool,
}

impl ToyBackend {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding width must be positive");
        Self { seed, dim, images: true }
    }

    pub fn text_only(seed: u64, dim: usize) -> Self {
        Self { images: false, ..Self::new(seed, dim) }
    }

    fn direction(&self, salt: &str, token: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(salt.as_bytes());
        hasher.update([0u8]);
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn embed(&self, salt: &str, text: &str) -> Vec<f64> {
        let mut acc = self.direction(salt, "\u{0}bias");
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
        {
            for (a, d) in acc.iter_mut().zip(self.direction(salt, &token)) {
                *a += d;
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        acc.iter().map(|x| x / norm).collect()
    }
}

impl EncoderBackend for ToyBackend {
    fn name(&self) -> &str {
        "toy"
    }

    fn embed_dim(&self) -> usize {
        self.dim
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { text: true, image: self.images }
    }

    fn encode_text(&self, text: &str) -> Result<Vec<f64>, VerifierError> {
        Ok(self.embed("text", text))
    }

    fn encode_image(&self, reference: &str) -> Result<Vec<f64>, VerifierError> {
        if !self.images {
            return Err(VerifierError::UnsupportedModality { backend: "toy".into(), kind: "image" });
        }
        Ok(self.embed("image", reference))
    }
}

type Factory = Box<dyn Fn(u64) -> Result<Box<dyn EncoderBackend>, VerifierError> + Send + Sync>;

/// Maps backend names to constructors. Non-toy names are unavailable until a
/// plugin registers a factory for them.
pub struct BackendRegistry {
    factories: HashMap<BackendName, Factory>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut reg = Self { factories: HashMap::new() };
        reg.register(BackendName::Toy, |seed| {
            Ok(Box::new(ToyBackend::new(seed, BackendName::Toy.default_embed_dim())))
        });
        reg
    }
}

impl BackendRegistry {
    pub fn register<F>(&mut self, name: BackendName, factory: F)
    where
        F: Fn(u64) -> Result<Box<dyn EncoderBackend>, VerifierError> + Send + Sync + 'static,
    {
        self.factories.insert(name, Box::new(factory));
    }

    pub fn open(&self, name: BackendName, seed: u64) -> Result<Box<dyn EncoderBackend>, VerifierError> {
        match self.factories.get(&name) {
            Some(f) => f(seed),
            None => Err(VerifierError::BackendUnavailable(format!(
                "no plugin registered for {name} ({})",
                name.checkpoint().unwrap_or("-")
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_is_deterministic() {
        let b = ToyBackend::new(7, 16);
        let ev = [EvidenceItem::text("some evidence"), EvidenceItem::image("a/b.jpg")];
        assert_eq!(b.encode("a claim", &ev).unwrap(), b.encode("a claim", &ev).unwrap());
        let other = ToyBackend::new(8, 16);
        assert_ne!(b.encode_text("x").unwrap(), other.encode_text("x").unwrap());
    }

    #[test]
    fn empty_evidence() {
        let enc = ToyBackend::new(1, 8).encode("claim", &[]).unwrap();
        assert!(enc.evidence.is_empty());
        assert_eq!(enc.claim.len(), 8);
    }

    #[test]
    fn norms_are_positive_and_finite() {
        let b = ToyBackend::new(3, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let len = rng.random_range(0..40);
            let text: String = (0..len).map(|_| rng.random_range(b' '..=b'~') as char).collect();
            let v = b.encode_text(&text).unwrap();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm.is_finite() && norm > 0.0, "{text:?}");
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn text_only_rejects_images() {
        let b = ToyBackend::text_only(1, 8);
        let err = b.encode("c", &[EvidenceItem::image("x.png")]).unwrap_err();
        assert!(matches!(err, VerifierError::UnsupportedModality { kind: "image", .. }));
    }

    #[test]
    fn plugin_backends_unavailable_by_default() {
        let reg = BackendRegistry::default();
        assert!(reg.open(BackendName::Toy, 0).is_ok());
        for name in [BackendName::ClipBase, BackendName::ClipLarge, BackendName::ClipLarge336, BackendName::Llava] {
            assert!(matches!(reg.open(name, 0), Err(VerifierError::BackendUnavailable(_))));
        }
        assert_eq!(BackendName::ClipBase.checkpoint(), Some("openai/clip-vit-base-patch32"));
    }

    #[test]
    fn lora_defaults() {
        let cfg = LoraPluginConfig::default();
        assert_eq!((cfg.rank, cfg.alpha), (64, 16));
        assert_eq!(cfg.dropout, 0.05);
        assert_eq!(cfg.lr, 2e-5);
        assert_eq!(cfg.max_seq_len, 2048);
    }
}
