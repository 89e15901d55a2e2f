//! Classification objectives and their gradients at the head outputs.
//!
//! Two objectives share one interface. `Basic` is mean cross entropy over
//! the class head plus a small quadratic penalty on the head weights.
//! `Multitask` blends cross entropies of the class head and a coarse-label
//! head, couples each class row to its coarse row with an attraction term
//! `alpha * sum_j ||W_j - U_s(j)||^2`, and adds plain decay `beta` on both
//! heads. Head biases are never penalized.

use serde::{Deserialize, Serialize};

use super::network::{Gradients, NetworkState, Pass};
use super::real::Real;
use super::NnetError;

/// Probabilities are clamped at this floor inside logs so a confidently
/// wrong prediction yields a large finite loss instead of infinity.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LossSpec {
    Basic {
        alpha: f64,
        /// Extends the `alpha` penalty to every conv/full weight tensor.
        #[serde(default)]
        global_decay: bool,
    },
    Multitask {
        /// Weight of the fine-label term; the coarse term gets `1 - gamma`.
        gamma: f64,
        /// Attraction between class rows and their coarse row.
        alpha: f64,
        /// Plain decay on both head weight matrices.
        beta: f64,
        /// `class_to_super[j]` is the coarse label of class `j`.
        class_to_super: Vec<usize>,
        /// Extends the `beta` penalty to every conv/full weight tensor.
        #[serde(default)]
        global_decay: bool,
    },
}

impl LossSpec {
    pub fn basic() -> Self {
        LossSpec::Basic { alpha: 1e-4, global_decay: false }
    }

    pub fn multitask(class_to_super: Vec<usize>) -> Self {
        LossSpec::Multitask { gamma: 0.6, alpha: 1e-4, beta: 1e-4, class_to_super, global_decay: false }
    }

    fn validate<F: Real>(&self, state: &NetworkState<F>) -> Result<(), NnetError> {
        match self {
            LossSpec::Basic { alpha, .. } => {
                if !alpha.is_finite() || *alpha < 0.0 {
                    return Err(NnetError::BadConfig(format!("bad alpha {alpha}")));
                }
            }
            LossSpec::Multitask { gamma, alpha, beta, class_to_super, .. } => {
                if !(0.0..=1.0).contains(gamma) {
                    return Err(NnetError::BadConfig(format!("gamma {gamma} outside [0, 1]")));
                }
                if *alpha < 0.0 || *beta < 0.0 || !alpha.is_finite() || !beta.is_finite() {
                    return Err(NnetError::BadConfig("negative or non-finite penalty".into()));
                }
                let u = state
                    .head_u
                    .as_ref()
                    .ok_or_else(|| NnetError::BadConfig("multitask loss needs the coarse head".into()))?;
                if class_to_super.len() != state.config.num_classes {
                    return Err(NnetError::BadConfig(format!(
                        "class_to_super maps {} classes, network has {}",
                        class_to_super.len(),
                        state.config.num_classes
                    )));
                }
                if let Some(bad) = class_to_super.iter().find(|&&m| m >= u.rows) {
                    return Err(NnetError::BadConfig(format!(
                        "class_to_super points at coarse label {bad}, head has {} rows",
                        u.rows
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Mean negative log likelihood part of the objective (no penalties).
/// For the multitask spec this is the gamma-blend of both heads; coarse
/// labels are derived from `class_to_super`.
pub fn data_loss<F: Real>(
    spec: &LossSpec,
    probs: &[F],
    super_probs: Option<&[F]>,
    num_classes: usize,
    labels: &[usize],
) -> Result<f64, NnetError> {
    let n = labels.len();
    if probs.len() != n * num_classes {
        return Err(NnetError::ShapeMismatch(format!(
            "{} probability entries for {} labels of {} classes",
            probs.len(),
            n,
            num_classes
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(NnetError::BadDataset(format!("label {bad} out of range")));
    }
    let nll = |p: F| -> f64 { -(p.f64().max(PROB_FLOOR)).ln() };
    match spec {
        LossSpec::Basic { .. } => {
            let mut sum = 0f64;
            for (i, &y) in labels.iter().enumerate() {
                sum += nll(probs[i * num_classes + y]);
            }
            Ok(sum / n as f64)
        }
        LossSpec::Multitask { gamma, class_to_super, .. } => {
            let sp = super_probs.ok_or_else(|| {
                NnetError::ShapeMismatch("multitask loss needs coarse probabilities".into())
            })?;
            let num_super = sp.len() / n;
            let mut sum = 0f64;
            for (i, &y) in labels.iter().enumerate() {
                let ys = class_to_super[y];
                sum += gamma * nll(probs[i * num_classes + y])
                    + (1.0 - gamma) * nll(sp[i * num_super + ys]);
            }
            Ok(sum / n as f64)
        }
    }
}

/// Value of every penalty term at the current weights.
pub fn regularizer_value<F: Real>(spec: &LossSpec, state: &NetworkState<F>) -> f64 {
    let sq = |v: &[F]| -> f64 { v.iter().map(|x| x.f64() * x.f64()).sum() };
    match spec {
        LossSpec::Basic { alpha, global_decay } => {
            let mut r = alpha * sq(&state.head_w.weight);
            if *global_decay {
                r += alpha * stack_weight_sq(state);
            }
            r
        }
        LossSpec::Multitask { alpha, beta, class_to_super, global_decay, .. } => {
            let u = state.head_u.as_ref().expect("validated");
            let l = state.head_w.cols;
            let mut attract = 0f64;
            for (j, &m) in class_to_super.iter().enumerate() {
                let wj = &state.head_w.weight[j * l..][..l];
                let um = &u.weight[m * l..][..l];
                for (a, b) in wj.iter().zip(um) {
                    let d = a.f64() - b.f64();
                    attract += d * d;
                }
            }
            let mut r = alpha * attract + beta * (sq(&state.head_w.weight) + sq(&u.weight));
            if *global_decay {
                r += beta * stack_weight_sq(state);
            }
            r
        }
    }
}

fn stack_weight_sq<F: Real>(state: &NetworkState<F>) -> f64 {
    use super::layers::LayerParams;
    let mut s = 0f64;
    for lp in &state.layers {
        let w = match lp {
            LayerParams::Conv(p) => &p.weight,
            LayerParams::Full(p) => &p.weight,
            _ => continue,
        };
        s += w.iter().map(|x| x.f64() * x.f64()).sum::<f64>();
    }
    s
}

/// Adds the penalty gradients onto `grads` in place.
pub fn apply_regularizer_grads<F: Real>(
    spec: &LossSpec,
    state: &NetworkState<F>,
    grads: &mut Gradients<F>,
) {
    match spec {
        LossSpec::Basic { alpha, global_decay } => {
            let two_a = F::c(2.0 * alpha);
            for (g, w) in grads.head_w.weight.iter_mut().zip(&state.head_w.weight) {
                *g += two_a * *w;
            }
            if *global_decay {
                decay_stack(state, grads, two_a);
            }
        }
        LossSpec::Multitask { alpha, beta, class_to_super, global_decay, .. } => {
            let u = state.head_u.as_ref().expect("validated");
            let gu = grads.head_u.as_mut().expect("gradients built with coarse head");
            let l = state.head_w.cols;
            let two_a = F::c(2.0 * alpha);
            let two_b = F::c(2.0 * beta);
            for (j, &m) in class_to_super.iter().enumerate() {
                for i in 0..l {
                    let wj = state.head_w.weight[j * l + i];
                    let um = u.weight[m * l + i];
                    grads.head_w.weight[j * l + i] += two_a * (wj - um) + two_b * wj;
                    gu.weight[m * l + i] += two_a * (um - wj);
                }
            }
            for (g, w) in gu.weight.iter_mut().zip(&u.weight) {
                *g += two_b * *w;
            }
            if *global_decay {
                decay_stack(state, grads, two_b);
            }
        }
    }
}

fn decay_stack<F: Real>(state: &NetworkState<F>, grads: &mut Gradients<F>, two_c: F) {
    use super::layers::LayerParams;
    for (lp, lg) in state.layers.iter().zip(grads.layers.iter_mut()) {
        let w = match lp {
            LayerParams::Conv(p) => &p.weight,
            LayerParams::Full(p) => &p.weight,
            _ => continue,
        };
        let lg = lg.as_mut().expect("parameterized layer has gradients");
        for (g, wv) in lg.weight.iter_mut().zip(w) {
            *g += two_c * *wv;
        }
    }
}

#[derive(Debug)]
pub struct LossOutput<F> {
    /// Full objective: data term plus penalties.
    pub total: f64,
    pub data_term: f64,
    /// Gradient of the objective at the class logits, row-major.
    pub dlogits: Vec<F>,
    /// Gradient at the coarse logits when the spec is multitask.
    pub dsuper: Option<Vec<F>>,
}

/// Objective value and logit gradients for one forward pass.
pub fn loss_and_output_grads<F: Real>(
    spec: &LossSpec,
    state: &NetworkState<F>,
    pass: &Pass<F>,
    labels: &[usize],
) -> Result<LossOutput<F>, NnetError> {
    spec.validate(state)?;
    let n = pass.batch_len();
    if labels.len() != n {
        return Err(NnetError::ShapeMismatch(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    let c = state.head_w.rows;
    let data_term = data_loss(spec, &pass.probs, pass.super_probs.as_deref(), c, labels)?;
    let total = data_term + regularizer_value(spec, state);
    let inv_n = 1.0 / n as f64;
    match spec {
        LossSpec::Basic { .. } => {
            let mut dlogits = vec![F::zero(); n * c];
            for (i, &y) in labels.iter().enumerate() {
                for j in 0..c {
                    let onehot = if j == y { 1.0 } else { 0.0 };
                    dlogits[i * c + j] = F::c((pass.probs[i * c + j].f64() - onehot) * inv_n);
                }
            }
            Ok(LossOutput { total, data_term, dlogits, dsuper: None })
        }
        LossSpec::Multitask { gamma, class_to_super, .. } => {
            let sp = pass.super_probs.as_ref().expect("validated");
            let ns = state.head_u.as_ref().expect("validated").rows;
            let mut dlogits = vec![F::zero(); n * c];
            let mut dsuper = vec![F::zero(); n * ns];
            for (i, &y) in labels.iter().enumerate() {
                let ys = class_to_super[y];
                for j in 0..c {
                    let onehot = if j == y { 1.0 } else { 0.0 };
                    dlogits[i * c + j] =
                        F::c(gamma * (pass.probs[i * c + j].f64() - onehot) * inv_n);
                }
                for m in 0..ns {
                    let onehot = if m == ys { 1.0 } else { 0.0 };
                    dsuper[i * ns + m] =
                        F::c((1.0 - gamma) * (sp[i * ns + m].f64() - onehot) * inv_n);
                }
            }
            Ok(LossOutput { total, data_term, dlogits, dsuper: Some(dsuper) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::config::{LayerSpec, NetworkConfig};
    use super::super::network::{build_network, forward, Mode};
    use super::super::tensor4::Tensor4;
    use super::*;
    use crate::numerics::Rng;

    fn head_only_state(classes: usize, supers: usize) -> NetworkState<f64> {
        // one flatten layer, so the heads read the raw 4-pixel input
        let cfg = NetworkConfig {
            input_h: 2,
            input_w: 2,
            input_channels: 1,
            layers: vec![LayerSpec::Flatten],
            num_classes: classes,
            num_superclasses: supers,
        };
        build_network(cfg, 5).unwrap()
    }

    #[test]
    fn basic_data_term_is_mean_nll() {
        let spec = LossSpec::Basic { alpha: 0.0, global_decay: false };
        let probs = vec![0.7f64, 0.2, 0.1, 0.1, 0.6, 0.3];
        let v = data_loss(&spec, &probs, None, 3, &[0, 2]).unwrap();
        let expect = (-(0.7f64).ln() - (0.3f64).ln()) / 2.0;
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_stays_finite() {
        let spec = LossSpec::Basic { alpha: 0.0, global_decay: false };
        let v = data_loss(&spec, &[0.0f64, 1.0], None, 2, &[0]).unwrap();
        assert!(v.is_finite());
        assert!((v - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn multitask_blends_both_heads() {
        let spec = LossSpec::Multitask {
            gamma: 0.6,
            alpha: 0.0,
            beta: 0.0,
            class_to_super: vec![0, 0, 1],
            global_decay: false,
        };
        let probs = vec![0.5f64, 0.3, 0.2];
        let sp = vec![0.8f64, 0.2];
        // label 1 maps to coarse 0
        let v = data_loss(&spec, &probs, Some(&sp), 3, &[1]).unwrap();
        let expect = -0.6 * (0.3f64).ln() - 0.4 * (0.8f64).ln();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn basic_logit_gradient_is_p_minus_onehot_over_n() {
        let state = head_only_state(3, 0);
        let spec = LossSpec::Basic { alpha: 0.0, global_decay: false };
        let batch = Tensor4::from_data(2, 1, 2, 2, vec![0.1, 0.9, -0.4, 0.3, 0.2, 0.5, 1.0, -1.0]);
        let pass = forward(&state, batch, Mode::Train { step: 0 }).unwrap();
        let out = loss_and_output_grads(&spec, &state, &pass, &[2, 0]).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let onehot = if (i == 0 && j == 2) || (i == 1 && j == 0) { 1.0 } else { 0.0 };
                let expect = (pass.probs[i * 3 + j] - onehot) / 2.0;
                assert!((out.dlogits[i * 3 + j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attraction_value_matches_hand_sum() {
        let mut state = head_only_state(2, 2);
        state.head_w.weight = vec![1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let u = state.head_u.as_mut().unwrap();
        u.weight = vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let spec = LossSpec::Multitask {
            gamma: 0.5,
            alpha: 2.0,
            beta: 0.0,
            class_to_super: vec![0, 1],
            global_decay: false,
        };
        // row 0 vs coarse 0: (1-0.5)^2 = 0.25; row 1 vs coarse 1: 2^2 = 4
        let r = regularizer_value(&spec, &state);
        assert!((r - 2.0 * 4.25).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradients_match_finite_differences() {
        let mut state = head_only_state(3, 2);
        let mut rng = Rng::new(11);
        for w in state.head_w.weight.iter_mut() {
            *w = rng.next_f64() - 0.5;
        }
        for w in state.head_u.as_mut().unwrap().weight.iter_mut() {
            *w = rng.next_f64() - 0.5;
        }
        let spec = LossSpec::Multitask {
            gamma: 0.5,
            alpha: 0.3,
            beta: 0.7,
            class_to_super: vec![0, 1, 1],
            global_decay: false,
        };
        let zero_grads = |state: &NetworkState<f64>| Gradients {
            layers: state.layers.iter().map(|_| None).collect(),
            head_w: super::super::network::HeadGrads {
                weight: vec![0.0; state.head_w.weight.len()],
                bias: vec![0.0; state.head_w.bias.len()],
            },
            head_u: state.head_u.as_ref().map(|u| super::super::network::HeadGrads {
                weight: vec![0.0; u.weight.len()],
                bias: vec![0.0; u.bias.len()],
            }),
        };
        let mut grads = zero_grads(&state);
        apply_regularizer_grads(&spec, &state, &mut grads);
        let h = 1e-6;
        for i in 0..state.head_w.weight.len() {
            let orig = state.head_w.weight[i];
            state.head_w.weight[i] = orig + h;
            let up = regularizer_value(&spec, &state);
            state.head_w.weight[i] = orig - h;
            let dn = regularizer_value(&spec, &state);
            state.head_w.weight[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (grads.head_w.weight[i] - fd).abs() < 1e-6,
                "head_w[{i}]: {} vs {fd}",
                grads.head_w.weight[i]
            );
        }
        for i in 0..state.head_u.as_ref().unwrap().weight.len() {
            let orig = state.head_u.as_ref().unwrap().weight[i];
            state.head_u.as_mut().unwrap().weight[i] = orig + h;
            let up = regularizer_value(&spec, &state);
            state.head_u.as_mut().unwrap().weight[i] = orig - h;
            let dn = regularizer_value(&spec, &state);
            state.head_u.as_mut().unwrap().weight[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (grads.head_u.as_ref().unwrap().weight[i] - fd).abs() < 1e-6,
                "head_u[{i}]"
            );
        }
    }

    #[test]
    fn gamma_bounds_are_enforced() {
        let state = head_only_state(2, 2);
        let spec = LossSpec::Multitask {
            gamma: 1.5,
            alpha: 0.0,
            beta: 0.0,
            class_to_super: vec![0, 1],
            global_decay: false,
        };
        let batch = Tensor4::from_data(1, 1, 2, 2, vec![0.0; 4]);
        let pass = forward(&state, batch, Mode::Train { step: 0 }).unwrap();
        assert!(loss_and_output_grads(&spec, &state, &pass, &[0]).is_err());
    }

    #[test]
    fn multitask_requires_coarse_head() {
        let state = head_only_state(2, 0);
        let spec = LossSpec::multitask(vec![0, 1]);
        let batch = Tensor4::from_data(1, 1, 2, 2, vec![0.0; 4]);
        let pass = forward(&state, batch, Mode::Train { step: 0 }).unwrap();
        assert!(loss_and_output_grads(&spec, &state, &pass, &[0]).is_err());
    }
}
