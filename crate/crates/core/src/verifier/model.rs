//! Stance layer, evidence aggregation and the linear veracity head.
//!
//! Per evidence item the stance layer sees `[c; e; c * e]` and applies
//! `W2 tanh(W1 x + b1) + b2`. Stance vectors are pooled (mean, max or
//! attention); an example without evidence uses a learned null stance.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backend::Encoded;
use super::{VeracityPrediction, VerifierError};
use crate::schema::VeracityLabel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
    Attention,
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            "attention" => Ok(Self::Attention),
            other => Err(format!("unknown aggregation {other:?}")),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Max => "max",
            Self::Attention => "attention",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub stance_dim: usize,
    pub num_classes: usize,
    pub aggregation: Aggregation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { embed_dim: 64, hidden_dim: 128, stance_dim: 128, num_classes: 3, aggregation: Aggregation::Mean }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    null: usize,
    attn: usize,
    wh: usize,
    bh: usize,
    len: usize,
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        3 * self.embed_dim
    }

    fn layout(&self) -> Layout {
        let (d3, h, s, k) = (self.input_dim(), self.hidden_dim, self.stance_dim, self.num_classes);
        let w1 = 0;
        let b1 = w1 + h * d3;
        let w2 = b1 + h;
        let b2 = w2 + s * h;
        let null = b2 + s;
        let attn = null + s;
        let wh = attn + s;
        let bh = wh + k * s;
        Layout { w1, b1, w2, b2, null, attn, wh, bh, len: bh + k }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

/// All trainable weights in one flat buffer. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub config: ModelConfig,
    pub data: Vec<f64>,
}

macro_rules! slice_accessors {
    ($($name:ident, $name_mut:ident, $start:ident, $end:ident;)*) => {
        $(
            pub fn $name(&self) -> &[f64] {
                let l = self.config.layout();
                &self.data[l.$start..l.$end]
            }
            pub fn $name_mut(&mut self) -> &mut [f64] {
                let l = self.config.layout();
                &mut self.data[l.$start..l.$end]
            }
        )*
    };
}

impl Params {
    pub fn zeros(config: ModelConfig) -> Self {
        Self { config, data: vec![0.0; config.param_count()] }
    }

    /// Glorot-uniform weights, zero biases, small random null stance.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d3, h, s, k) = (config.input_dim(), config.hidden_dim, config.stance_dim, config.num_classes);
        let mut fill = |xs: &mut [f64], fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in xs {
                *x = rng.random_range(-bound..bound);
            }
        };
        fill(p.w1_mut(), d3, h);
        fill(p.w2_mut(), h, s);
        fill(p.null_mut(), s, s);
        fill(p.wh_mut(), s, k);
        p
    }

    slice_accessors! {
        w1, w1_mut, w1, b1;
        b1, b1_mut, b1, w2;
        w2, w2_mut, w2, b2;
        b2, b2_mut, b2, null;
        null, null_mut, null, attn;
        attn, attn_mut, attn, wh;
        wh, wh_mut, wh, bh;
        bh, bh_mut, bh, len;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Row-major `out = W x + b`.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| bias + w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

struct ItemCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
    stance: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub struct ForwardCache {
    items: Vec<ItemCache>,
    attn_weights: Vec<f64>,
    max_index: Vec<usize>,
    aggregate: Vec<f64>,
    pub probs: Vec<f64>,
}

fn stance_input(claim: &[f64], evidence: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(claim.len() * 3);
    x.extend_from_slice(claim);
    x.extend_from_slice(evidence);
    x.extend(claim.iter().zip(evidence).map(|(c, e)| c * e));
    x
}

fn check_shapes(params: &Params, enc: &Encoded) -> Result<(), VerifierError> {
    let d = params.config.embed_dim;
    if enc.claim.len() != d {
        return Err(VerifierError::ShapeMismatch { expected: d, found: enc.claim.len() });
    }
    if let Some(bad) = enc.evidence.iter().find(|e| e.len() != d) {
        return Err(VerifierError::ShapeMismatch { expected: d, found: bad.len() });
    }
    if params.data.len() != params.config.param_count() {
        return Err(VerifierError::ShapeMismatch { expected: params.config.param_count(), found: params.data.len() });
    }
    Ok(())
}

pub fn forward_cached(params: &Params, enc: &Encoded) -> Result<ForwardCache, VerifierError> {
    check_shapes(params, enc)?;
    let cfg = params.config;
    let items: Vec<ItemCache> = enc
        .evidence
        .iter()
        .map(|e| {
            let input = stance_input(&enc.claim, e);
            let hidden: Vec<f64> = affine(params.w1(), params.b1(), &input).into_iter().map(f64::tanh).collect();
            let stance = affine(params.w2(), params.b2(), &hidden);
            ItemCache { input, hidden, stance }
        })
        .collect();

    let s = cfg.stance_dim;
    let mut attn_weights = Vec::new();
    let mut max_index = Vec::new();
    let aggregate = if items.is_empty() {
        params.null().to_vec()
    } else {
        match cfg.aggregation {
            Aggregation::Mean => {
                let n = items.len() as f64;
                (0..s).map(|j| items.iter().map(|it| it.stance[j]).sum::<f64>() / n).collect()
            }
            Aggregation::Max => {
                max_index = (0..s)
                    .map(|j| {
                        let col: Vec<f64> = items.iter().map(|it| it.stance[j]).collect();
                        argmax(&col)
                    })
                    .collect();
                (0..s).map(|j| items[max_index[j]].stance[j]).collect()
            }
            Aggregation::Attention => {
                let scores: Vec<f64> = items
                    .iter()
                    .map(|it| it.stance.iter().zip(params.attn()).map(|(a, b)| a * b).sum())
                    .collect();
                attn_weights = softmax(&scores);
                (0..s).map(|j| items.iter().zip(&attn_weights).map(|(it, w)| w * it.stance[j]).sum()).collect()
            }
        }
    };
    let logits = affine(params.wh(), params.bh(), &aggregate);
    let probs = softmax(&logits);
    Ok(ForwardCache { items, attn_weights, max_index, aggregate, probs })
}

pub fn forward_encoded(params: &Params, enc: &Encoded) -> Result<VeracityPrediction, VerifierError> {
    let cache = forward_cached(params, enc)?;
    Ok(VeracityPrediction::from_probs(cache.probs))
}

/// Cross-entropy loss of one example and its gradient, accumulated into `grad`.
pub fn loss_and_grad(
    params: &Params,
    enc: &Encoded,
    target: VeracityLabel,
    grad: &mut [f64],
) -> Result<f64, VerifierError> {
    let cfg = params.config;
    let t = target.index();
    if t >= cfg.num_classes {
        return Err(VerifierError::ShapeMismatch { expected: cfg.num_classes, found: t + 1 });
    }
    let cache = forward_cached(params, enc)?;
    let loss = -cache.probs[t].ln();
    let l = cfg.layout();
    let (d3, h, s) = (cfg.input_dim(), cfg.hidden_dim, cfg.stance_dim);

    // head
    let dlogits: Vec<f64> =
        cache.probs.iter().enumerate().map(|(k, p)| p - if k == t { 1.0 } else { 0.0 }).collect();
    let mut dagg = vec![0.0; s];
    for (k, dz) in dlogits.iter().enumerate() {
        grad[l.bh + k] += dz;
        let row = &params.wh()[k * s..(k + 1) * s];
        for j in 0..s {
            grad[l.wh + k * s + j] += dz * cache.aggregate[j];
            dagg[j] += dz * row[j];
        }
    }

    // aggregation
    let n = cache.items.len();
    if n == 0 {
        for j in 0..s {
            grad[l.null + j] += dagg[j];
        }
        return Ok(loss);
    }
    let mut dstance = vec![vec![0.0; s]; n];
    match cfg.aggregation {
        Aggregation::Mean => {
            for ds in dstance.iter_mut() {
                for j in 0..s {
                    ds[j] = dagg[j] / n as f64;
                }
            }
        }
        Aggregation::Max => {
            for j in 0..s {
                dstance[cache.max_index[j]][j] = dagg[j];
            }
        }
        Aggregation::Attention => {
            let w = &cache.attn_weights;
            let dw: Vec<f64> = cache
                .items
                .iter()
                .map(|it| it.stance.iter().zip(&dagg).map(|(a, b)| a * b).sum())
                .collect();
            let mean_dw: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
            for (i, it) in cache.items.iter().enumerate() {
                let dscore = w[i] * (dw[i] - mean_dw);
                for j in 0..s {
                    dstance[i][j] = w[i] * dagg[j] + dscore * params.attn()[j];
                    grad[l.attn + j] += dscore * it.stance[j];
                }
            }
        }
    }

    // stance layer
    let w2 = params.w2();
    for (it, ds) in cache.items.iter().zip(&dstance) {
        let mut dhidden = vec![0.0; h];
        for r in 0..s {
            grad[l.b2 + r] += ds[r];
            for c in 0..h {
                grad[l.w2 + r * h + c] += ds[r] * it.hidden[c];
                dhidden[c] += ds[r] * w2[r * h + c];
            }
        }
        for c in 0..h {
            let du = dhidden[c] * (1.0 - it.hidden[c] * it.hidden[c]);
            grad[l.b1 + c] += du;
            let row = l.w1 + c * d3;
            for (i, x) in it.input.iter().enumerate() {
                grad[row + i] += du * x;
            }
        }
    }
    Ok(loss)
}

/// Loss only; used by finite-difference checks.
pub fn loss(params: &Params, enc: &Encoded, target: VeracityLabel) -> Result<f64, VerifierError> {
    let cache = forward_cached(params, enc)?;
    Ok(-cache.probs[target.index()].ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(aggregation: Aggregation) -> ModelConfig {
        ModelConfig { embed_dim: 4, hidden_dim: 5, stance_dim: 3, num_classes: 3, aggregation }
    }

    fn enc(n: usize, seed: u64) -> Encoded {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || (0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        Encoded { claim: v(), evidence: (0..n).map(|_| v()).collect() }
    }

    #[test]
    fn layout_covers_buffer() {
        let c = cfg(Aggregation::Mean);
        let p = Params::init(c, 1);
        let total = p.w1().len() + p.b1().len() + p.w2().len() + p.b2().len() + p.null().len()
            + p.attn().len() + p.wh().len() + p.bh().len();
        assert_eq!(total, p.len());
        assert_eq!(p.w1().len(), 5 * 12);
    }

    #[test]
    fn mean_of_one_is_that_stance() {
        let p = Params::init(cfg(Aggregation::Mean), 2);
        let e = enc(1, 3);
        let cache = forward_cached(&p, &e).unwrap();
        assert_eq!(cache.aggregate, cache.items[0].stance);
    }

    #[test]
    fn duplicated_evidence_same_prediction() {
        for agg in [Aggregation::Mean, Aggregation::Max, Aggregation::Attention] {
            let p = Params::init(cfg(agg), 2);
            let one = enc(1, 3);
            let two = Encoded { claim: one.claim.clone(), evidence: vec![one.evidence[0].clone(); 2] };
            let a = forward_encoded(&p, &one).unwrap();
            let b = forward_encoded(&p, &two).unwrap();
            for (x, y) in a.probs.iter().zip(&b.probs) {
                assert!((x - y).abs() < 1e-12, "{agg}");
            }
        }
    }

    #[test]
    fn zero_evidence_uses_null_stance() {
        let p = Params::init(cfg(Aggregation::Mean), 4);
        let cache = forward_cached(&p, &enc(0, 1)).unwrap();
        assert_eq!(cache.aggregate, p.null());
    }

    #[test]
    fn shape_mismatch() {
        let p = Params::init(cfg(Aggregation::Mean), 4);
        let bad = Encoded { claim: vec![0.0; 3], evidence: vec![] };
        assert!(matches!(forward_encoded(&p, &bad), Err(VerifierError::ShapeMismatch { .. })));
    }

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
