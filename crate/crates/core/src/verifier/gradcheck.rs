use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backend::Encoded;
use super::model::{loss, loss_and_grad, Params};
use super::VerifierError;
use crate::schema::VeracityLabel;

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    pub coordinates: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { coordinates: 5, step: 1e-5, seed: 0 }
    }
}

/// Relative error with a small floor so near-zero gradients compare by
/// absolute difference.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the analytic gradient with central finite differences on a
/// random sample of parameter coordinates; returns the largest relative error.
pub fn gradcheck(
    params: &Params,
    enc: &Encoded,
    target: VeracityLabel,
    opts: GradcheckOptions,
) -> Result<f64, VerifierError> {
    let mut grad = vec![0.0; params.len()];
    loss_and_grad(params, enc, target, &mut grad)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..opts.coordinates {
        let i = rng.random_range(0..params.len());
        let orig = probe.data[i];
        probe.data[i] = orig + opts.step;
        let up = loss(&probe, enc, target)?;
        probe.data[i] = orig - opts.step;
        let down = loss(&probe, enc, target)?;
        probe.data[i] = orig;
        let numeric = (up - down) / (2.0 * opts.step);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::model::{Aggregation, ModelConfig};

    fn encoded(seed: u64, n: usize) -> Encoded {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || (0..6).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        Encoded { claim: v(), evidence: (0..n).map(|_| v()).collect() }
    }

    #[test]
    fn small_stack_passes() {
        let cfg = ModelConfig { embed_dim: 6, hidden_dim: 5, stance_dim: 4, num_classes: 3, aggregation: Aggregation::Mean };
        let p = Params::init(cfg, 3);
        let err = gradcheck(&p, &encoded(1, 3), VeracityLabel::Refuted, GradcheckOptions::default()).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_head_matches_closed_form() {
        // With a zero head the logits are uniform, so dL/dbias = 1/K - onehot
        // and dL/dW = (1/K - onehot) * aggregate^T.
        let cfg = ModelConfig { embed_dim: 6, hidden_dim: 5, stance_dim: 4, num_classes: 3, aggregation: Aggregation::Mean };
        let mut p = Params::init(cfg, 9);
        p.wh_mut().iter_mut().for_each(|w| *w = 0.0);
        p.bh_mut().iter_mut().for_each(|b| *b = 0.0);
        let enc = encoded(2, 0);
        let mut grad = vec![0.0; p.len()];
        let l = loss_and_grad(&p, &enc, VeracityLabel::Nei, &mut grad).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        let bh_start = p.len() - 3;
        let expected_bias = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0 - 1.0];
        for k in 0..3 {
            assert!((grad[bh_start + k] - expected_bias[k]).abs() < 1e-12);
        }
        let wh_start = bh_start - 3 * 4;
        for k in 0..3 {
            for j in 0..4 {
                let expected = expected_bias[k] * p.null()[j];
                assert!((grad[wh_start + k * 4 + j] - expected).abs() < 1e-12);
            }
        }
    }
}
