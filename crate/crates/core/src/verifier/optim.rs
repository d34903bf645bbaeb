use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    AdamW,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::Adam),
            "adamw" => Ok(Self::AdamW),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

/// Adam with optional decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, n: usize) -> Self {
        Self { kind, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = match self.kind {
                OptimizerKind::Adam => grad[i] + self.weight_decay * params[i],
                OptimizerKind::AdamW => grad[i],
            };
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            if self.kind == OptimizerKind::AdamW {
                params[i] -= self.lr * self.weight_decay * params[i];
            }
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut opt = Adam::new(OptimizerKind::Adam, 0.1, 0.0, 2);
        let mut p = vec![1.0, -1.0];
        opt.update(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_identity() {
        for kind in [OptimizerKind::Adam, OptimizerKind::AdamW] {
            let mut opt = Adam::new(kind, 0.0, 0.01, 3);
            let mut p = vec![0.5, -2.0, 3.0];
            opt.update(&mut p, &[1.0, 2.0, -3.0]);
            assert_eq!(p, vec![0.5, -2.0, 3.0]);
        }
    }

    #[test]
    fn minimizes_quadratic() {
        let mut opt = Adam::new(OptimizerKind::AdamW, 0.05, 0.0, 1);
        let mut x = vec![4.0];
        for _ in 0..500 {
            let g = vec![2.0 * (x[0] - 1.0)];
            opt.update(&mut x, &g);
        }
        assert!((x[0] - 1.0).abs() < 1e-2);
    }
}
