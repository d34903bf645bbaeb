//! The fact verification model: a frozen encoder backend, a per-evidence
//! stance layer, evidence aggregation and a linear veracity head.

pub mod backend;
pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{BackendName, BackendRegistry, Encoded, EncoderBackend, LoraPluginConfig, ToyBackend};
pub use checkpoint::{Checkpoint, CheckpointConfig};
pub use gradcheck::{gradcheck, GradcheckOptions};
pub use model::{forward_encoded, Aggregation, ModelConfig, Params};
pub use optim::OptimizerKind;
pub use train::{train, train_from, train_with_model, EpochMetrics, TrainConfig, TrainOutcome};

use crate::mixture::MixtureError;
use crate::schema::{VeracityLabel, VerificationExample};

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("backend {backend} cannot encode {kind} evidence")]
    UnsupportedModality { backend: String, kind: &'static str },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("loss diverged to {loss} at epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Probability vector over the head's classes plus its argmax label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeracityPrediction {
    pub probs: Vec<f64>,
    pub label: VeracityLabel,
}

impl VeracityPrediction {
    /// Argmax with ties toward the lower code.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let label = VeracityLabel::from_code(model::argmax(&probs) as u8).unwrap_or(VeracityLabel::Nei);
        Self { probs, label }
    }
}

/// A trained parameter set bound to the encoder it was trained with.
pub struct Verifier {
    pub params: Params,
    pub backend: Box<dyn EncoderBackend>,
}

impl Verifier {
    pub fn from_checkpoint(ckpt: &Checkpoint, backends: &BackendRegistry) -> Result<Self, VerifierError> {
        let backend = backends.open(ckpt.config.backend, ckpt.config.backend_seed)?;
        if backend.embed_dim() != ckpt.params.config.embed_dim {
            return Err(VerifierError::ShapeMismatch {
                expected: ckpt.params.config.embed_dim,
                found: backend.embed_dim(),
            });
        }
        Ok(Self { params: ckpt.params.clone(), backend })
    }

    pub fn predict(&self, ex: &VerificationExample) -> Result<VeracityPrediction, VerifierError> {
        let enc = self.backend.encode(&ex.claim, &ex.evidence)?;
        forward_encoded(&self.params, &enc)
    }
}
