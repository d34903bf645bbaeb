use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::backend::{EncoderBackend, Encoded};
use super::model::{forward_encoded, loss_and_grad, Aggregation, ModelConfig, Params};
use super::optim::{Adam, OptimizerKind};
use super::VerifierError;
use crate::eval::{f1, map_prediction, Averaging};
use crate::mixture::{build_epoch, MixtureSpec};
use crate::schema::{DatasetStore, Split, VerificationExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Examples per optimizer update.
    pub batch_size: usize,
    /// Examples per gradient-accumulation step.
    pub micro_batch: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub aggregation: Aggregation,
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 2048,
            micro_batch: 256,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            aggregation: Aggregation::Mean,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VerifierError> {
        if self.batch_size == 0 || self.micro_batch == 0 {
            return Err(VerifierError::Config("batch sizes must be positive".into()));
        }
        if !self.batch_size.is_multiple_of(self.micro_batch) {
            return Err(VerifierError::Config(format!(
                "batch size {} is not a multiple of micro-batch {}",
                self.batch_size, self.micro_batch
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(VerifierError::Config(format!("bad learning rate {}", self.lr)));
        }
        Ok(())
    }

    /// Micro-batches accumulated per optimizer update.
    pub fn accumulation_steps(&self) -> usize {
        self.batch_size / self.micro_batch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub examples: usize,
    pub optimizer_steps: usize,
    pub micro_batches: usize,
    /// Macro F1 (percent) on each member's validation split.
    pub val_f1: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params,
    pub log: Vec<EpochMetrics>,
}

/// Encodes examples once and reuses the result; the backend is frozen.
pub(crate) struct EncodingCache<'a> {
    backend: &'a dyn EncoderBackend,
    map: HashMap<(String, String, usize), Encoded>,
}

impl<'a> EncodingCache<'a> {
    pub(crate) fn new(backend: &'a dyn EncoderBackend) -> Self {
        Self { backend, map: HashMap::new() }
    }

    pub(crate) fn get(&mut self, ex: &VerificationExample) -> Result<&Encoded, VerifierError> {
        let key = (ex.dataset.clone(), ex.id.clone(), ex.evidence.len());
        if !self.map.contains_key(&key) {
            let enc = self.backend.encode(&ex.claim, &ex.evidence)?;
            self.map.insert(key.clone(), enc);
        }
        Ok(&self.map[&key])
    }
}

/// Macro F1 in percent on one dataset split, mapping 3-way predictions into
/// binary label spaces where needed.
pub(crate) fn evaluate_split(
    params: &Params,
    cache: &mut EncodingCache<'_>,
    examples: &[VerificationExample],
    store: &DatasetStore,
    averaging: Averaging,
) -> Result<f64, VerifierError> {
    let key = &examples[0].dataset;
    let space = store.label_space(key).unwrap_or_else(crate::schema::ternary_space);
    let mut preds = Vec::with_capacity(examples.len());
    let mut golds = Vec::with_capacity(examples.len());
    for ex in examples {
        let pred = forward_encoded(params, cache.get(ex)?)?;
        preds.push(map_prediction(&pred, &space).map_err(|e| VerifierError::Config(e.to_string()))?);
        golds.push(ex.label);
    }
    f1(&preds, &golds, averaging).map_err(|e| VerifierError::Config(e.to_string()))
}

/// Trains the stance/aggregation/head stack on a mixture with a frozen encoder.
pub fn train(
    spec: &MixtureSpec,
    store: &DatasetStore,
    cfg: &TrainConfig,
    backend: &dyn EncoderBackend,
) -> Result<TrainOutcome, VerifierError> {
    let model = ModelConfig { embed_dim: backend.embed_dim(), aggregation: cfg.aggregation, ..ModelConfig::default() };
    train_with_model(spec, store, cfg, model, backend)
}

pub fn train_with_model(
    spec: &MixtureSpec,
    store: &DatasetStore,
    cfg: &TrainConfig,
    model: ModelConfig,
    backend: &dyn EncoderBackend,
) -> Result<TrainOutcome, VerifierError> {
    cfg.validate()?;
    if model.embed_dim != backend.embed_dim() {
        return Err(VerifierError::ShapeMismatch { expected: model.embed_dim, found: backend.embed_dim() });
    }
    let params = Params::init(ModelConfig { aggregation: cfg.aggregation, ..model }, cfg.seed);
    train_from(params, spec, store, cfg, backend)
}

/// Continues training from existing parameters.
pub fn train_from(
    mut params: Params,
    spec: &MixtureSpec,
    store: &DatasetStore,
    cfg: &TrainConfig,
    backend: &dyn EncoderBackend,
) -> Result<TrainOutcome, VerifierError> {
    cfg.validate()?;
    let mut optimizer = Adam::new(cfg.optimizer, cfg.lr, cfg.weight_decay, params.len());
    let mut cache = EncodingCache::new(backend);
    let mut grad = vec![0.0; params.len()];
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let stream = build_epoch(spec, store, Split::Train, epoch as u64)?;
        let mut loss_sum = 0.0;
        let mut optimizer_steps = 0;
        let mut micro_batches = 0;

        for (batch_idx, batch) in stream.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for micro in batch.chunks(cfg.micro_batch) {
                let mut micro_loss = 0.0;
                for ex in micro {
                    let enc = cache.get(ex)?;
                    micro_loss += loss_and_grad(&params, enc, ex.label, &mut grad)?;
                }
                if !micro_loss.is_finite() {
                    return Err(VerifierError::DivergedLoss {
                        epoch,
                        batch: batch_idx,
                        loss: micro_loss,
                    });
                }
                loss_sum += micro_loss;
                micro_batches += 1;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            optimizer.update(&mut params.data, &grad);
            optimizer_steps += 1;
        }

        let mut val_f1 = BTreeMap::new();
        for member in &spec.members {
            if let Some(val) = store.split(member, Split::Val).filter(|v| !v.is_empty()) {
                let score = evaluate_split(&params, &mut cache, val, store, Averaging::Macro)?;
                val_f1.insert(member.clone(), score);
            }
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss: if stream.is_empty() { 0.0 } else { loss_sum / stream.len() as f64 },
            examples: stream.len(),
            optimizer_steps,
            micro_batches,
            val_f1,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, {} updates, val {:?}",
            metrics.train_loss,
            metrics.optimizer_steps,
            metrics.val_f1
        );
        log.push(metrics);
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::Sampling;
    use crate::schema::{DomainTag, EvidenceItem, VeracityLabel};
    use crate::verifier::backend::ToyBackend;

    fn store(n: usize) -> DatasetStore {
        let words = ["confirmed", "debunked", "unclear"];
        let xs = (0..n).map(|i| {
            let label = VeracityLabel::ALL[i % 3];
            VerificationExample {
                id: format!("s{i}"),
                claim: format!("claim number {i}"),
                evidence: vec![EvidenceItem::text(format!("report {}", words[i % 3]))],
                label,
                dataset: "syn".into(),
                domain: DomainTag::Misinformation,
                split: if i % 5 == 0 { Split::Val } else { Split::Train },
                timestamp: None,
            }
        });
        DatasetStore::from_examples(xs).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig { epochs: 1, batch_size: 8, micro_batch: 4, lr: 1e-3, seed: 1, ..TrainConfig::default() }
    }

    #[test]
    fn defaults_match_published_setup() {
        let cfg = TrainConfig::default();
        assert_eq!((cfg.epochs, cfg.batch_size, cfg.micro_batch), (50, 2048, 256));
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.optimizer, OptimizerKind::Adam);
        assert_eq!(cfg.accumulation_steps(), 8);
    }

    #[test]
    fn rejects_indivisible_batch() {
        let cfg = TrainConfig { batch_size: 10, micro_batch: 4, ..TrainConfig::default() };
        assert!(matches!(cfg.validate(), Err(VerifierError::Config(_))));
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let st = store(40);
        let spec = MixtureSpec::with_store(&["syn"], Sampling::Concat, 0, &st).unwrap();
        let backend = ToyBackend::new(0, 8);
        let cfg = TrainConfig { lr: 0.0, ..small_cfg() };
        let model = ModelConfig { embed_dim: 8, hidden_dim: 6, stance_dim: 5, ..ModelConfig::default() };
        let init = Params::init(model, cfg.seed);
        let out = train_with_model(&spec, &st, &cfg, model, &backend).unwrap();
        let max_delta = init.data.iter().zip(&out.params.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert_eq!(max_delta, 0.0);
    }

    #[test]
    fn accumulation_counts() {
        let st = store(40);
        let spec = MixtureSpec::with_store(&["syn"], Sampling::Concat, 0, &st).unwrap();
        let backend = ToyBackend::new(0, 8);
        let model = ModelConfig { embed_dim: 8, hidden_dim: 6, stance_dim: 5, ..ModelConfig::default() };
        // 32 train examples, batches of 8 split into 2 micro-batches of 4
        let out = train_with_model(&spec, &st, &small_cfg(), model, &backend).unwrap();
        assert_eq!(out.log[0].examples, 32);
        assert_eq!(out.log[0].optimizer_steps, 4);
        assert_eq!(out.log[0].micro_batches, 8);
        assert!(out.log[0].val_f1.contains_key("syn"));
    }

    #[test]
    fn embed_dim_must_match_backend() {
        let st = store(10);
        let spec = MixtureSpec::with_store(&["syn"], Sampling::Concat, 0, &st).unwrap();
        let model = ModelConfig { embed_dim: 9, ..ModelConfig::default() };
        let err = train_with_model(&spec, &st, &small_cfg(), model, &ToyBackend::new(0, 8)).unwrap_err();
        assert!(matches!(err, VerifierError::ShapeMismatch { .. }));
    }

    #[test]
    fn diverging_loss_aborts() {
        let st = store(20);
        let spec = MixtureSpec::with_store(&["syn"], Sampling::Concat, 0, &st).unwrap();
        let backend = ToyBackend::new(0, 8);
        let model = ModelConfig { embed_dim: 8, hidden_dim: 6, stance_dim: 5, ..ModelConfig::default() };
        let mut params = Params::init(model, 0);
        params.wh_mut()[0] = f64::NAN;
        let err = train_from(params, &spec, &st, &small_cfg(), &backend).unwrap_err();
        assert!(matches!(err, VerifierError::DivergedLoss { .. }));
    }
}
