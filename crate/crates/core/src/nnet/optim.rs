//! First-order optimizers over the canonical parameter traversal.

use serde::{Deserialize, Serialize};

use super::network::{grad_tensors, param_lens, param_tensors_mut, Gradients, NetworkState};
use super::real::Real;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Bias-corrected Adam with beta1 0.9, beta2 0.999, eps 1e-8.
    Adam { lr: f64 },
    /// Classical momentum: `m = momentum * m + g; w -= lr * m`.
    Sgd { lr: f64, momentum: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { lr: 1e-4 }
    }

    pub fn sgd() -> Self {
        OptimizerKind::Sgd { lr: 0.1, momentum: 0.9 }
    }
}

/// Optimizer slots sized for one specific network. Moments live outside the
/// network state and are not checkpointed; resuming training restarts them.
#[derive(Debug, Clone)]
pub struct Optimizer<F> {
    kind: OptimizerKind,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
}

impl<F: Real> Optimizer<F> {
    pub fn new(kind: OptimizerKind, state: &NetworkState<F>) -> Self {
        let lens = param_lens(state);
        let m = lens.iter().map(|&l| vec![F::zero(); l]).collect();
        let v = match kind {
            OptimizerKind::Adam { .. } => lens.iter().map(|&l| vec![F::zero(); l]).collect(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Optimizer { kind, m, v, t: 0 }
    }

    pub fn step(&mut self, state: &mut NetworkState<F>, grads: &Gradients<F>) {
        self.t += 1;
        let params = param_tensors_mut(state);
        let gs = grad_tensors(grads);
        assert_eq!(params.len(), gs.len(), "gradients do not match the network");
        match self.kind {
            OptimizerKind::Adam { lr } => {
                let b1 = F::c(ADAM_BETA1);
                let b2 = F::c(ADAM_BETA2);
                let one_m_b1 = F::c(1.0 - ADAM_BETA1);
                let one_m_b2 = F::c(1.0 - ADAM_BETA2);
                let c1 = F::c(1.0 / (1.0 - ADAM_BETA1.powi(self.t as i32)));
                let c2 = F::c(1.0 / (1.0 - ADAM_BETA2.powi(self.t as i32)));
                let lr = F::c(lr);
                let eps = F::c(ADAM_EPS);
                for (((_, w), g), (m, v)) in
                    params.into_iter().zip(gs).zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    debug_assert_eq!(w.len(), g.len());
                    for i in 0..w.len() {
                        m[i] = b1 * m[i] + one_m_b1 * g[i];
                        v[i] = b2 * v[i] + one_m_b2 * g[i] * g[i];
                        let mhat = m[i] * c1;
                        let vhat = v[i] * c2;
                        w[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::Sgd { lr, momentum } => {
                let mu = F::c(momentum);
                let lr = F::c(lr);
                for (((_, w), g), m) in params.into_iter().zip(gs).zip(self.m.iter_mut()) {
                    debug_assert_eq!(w.len(), g.len());
                    for i in 0..w.len() {
                        m[i] = mu * m[i] + g[i];
                        w[i] -= lr * m[i];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::config::{LayerSpec, NetworkConfig};
    use super::super::network::build_network;
    use super::super::network::{Gradients, HeadGrads};
    use super::*;

    fn one_weight_state() -> NetworkState<f64> {
        // flatten-only stack: the only parameters are the head weight and bias
        let cfg = NetworkConfig {
            input_h: 1,
            input_w: 1,
            input_channels: 1,
            layers: vec![LayerSpec::Flatten],
            num_classes: 2,
            num_superclasses: 0,
        };
        let mut s = build_network(cfg, 0).unwrap();
        s.head_w.weight = vec![1.0, 1.0];
        s.head_w.bias = vec![0.0, 0.0];
        s
    }

    fn grads_of(state: &NetworkState<f64>, g: Vec<f64>) -> Gradients<f64> {
        Gradients {
            layers: state.layers.iter().map(|_| None).collect(),
            head_w: HeadGrads { weight: g, bias: vec![0.0, 0.0] },
            head_u: None,
        }
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut state = one_weight_state();
        let mut opt = Optimizer::new(OptimizerKind::Sgd { lr: 0.1, momentum: 0.9 }, &state);
        let g = grads_of(&state, vec![1.0, 0.0]);
        opt.step(&mut state, &g);
        // m = 1, w = 1 - 0.1
        assert!((state.head_w.weight[0] - 0.9).abs() < 1e-15);
        opt.step(&mut state, &g);
        // m = 0.9 + 1 = 1.9, w = 0.9 - 0.19
        assert!((state.head_w.weight[0] - 0.71).abs() < 1e-15);
        assert_eq!(state.head_w.weight[1], 1.0);
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        let mut state = one_weight_state();
        let mut opt = Optimizer::new(OptimizerKind::Adam { lr: 0.001 }, &state);
        let g = grads_of(&state, vec![3.0, -3.0]);
        opt.step(&mut state, &g);
        // bias correction makes the first update lr * g/|g| up to eps
        assert!((state.head_w.weight[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((state.head_w.weight[1] - (1.0 + 0.001)).abs() < 1e-9);
    }

    #[test]
    fn adam_matches_scalar_reference() {
        // two steps with different gradients, checked against the textbook
        // recursion evaluated by hand in f64
        let mut state = one_weight_state();
        let mut opt = Optimizer::new(OptimizerKind::Adam { lr: 0.01 }, &state);
        let gs = [0.5, -0.25];
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut w = 1.0f64;
        for (t, gv) in gs.iter().enumerate() {
            let g = grads_of(&state, vec![*gv, 0.0]);
            opt.step(&mut state, &g);
            m = 0.9 * m + 0.1 * gv;
            v = 0.999 * v + 0.001 * gv * gv;
            let mhat = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vhat = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w -= 0.01 * mhat / (vhat.sqrt() + 1e-8);
            assert!((state.head_w.weight[0] - w).abs() < 1e-15, "step {t}");
        }
    }
}
