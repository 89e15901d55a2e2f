//! Central finite-difference verification of backpropagation.
//!
//! The probe evaluates the full objective in train mode with a fixed step, so
//! dropout masks and batch statistics are identical across evaluations and
//! running statistics are never touched. Meant to run in f64; in f32 the
//! differences drown in rounding noise.

use crate::numerics::Rng;

use super::loss::{apply_regularizer_grads, loss_and_output_grads, LossSpec};
use super::network::{
    backward, forward, grad_tensors, param_lens, param_names, param_tensors_mut, Mode,
    NetworkState,
};
use super::real::Real;
use super::tensor4::Tensor4;
use super::NnetError;

/// Step size scale: the probe uses `h = H_SCALE * (1 + |w|)`.
const H_SCALE: f64 = 1e-5;

/// Full objective (data term plus penalties) for one batch at fixed dropout.
pub fn loss_for_check<F: Real>(
    state: &NetworkState<F>,
    batch: &Tensor4<F>,
    labels: &[usize],
    spec: &LossSpec,
    step: u64,
) -> Result<f64, NnetError> {
    let pass = forward(state, batch.clone(), Mode::Train { step })?;
    Ok(loss_and_output_grads(spec, state, &pass, labels)?.total)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Number of (batch, parameter index) comparisons performed.
    pub compared: usize,
    pub max_rel_err: f64,
    /// Location of the worst comparison, like `layer3.weight[41]`.
    pub worst: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

fn set_param<F: Real>(state: &mut NetworkState<F>, tensor: usize, index: usize, value: F) {
    let mut ps = param_tensors_mut(state);
    ps[tensor].1[index] = value;
}

fn get_param<F: Real>(state: &mut NetworkState<F>, tensor: usize, index: usize) -> F {
    let ps = param_tensors_mut(state);
    ps[tensor].1[index]
}

/// Compares analytic gradients against central differences on sampled
/// parameter indices over several batches.
///
/// The error is `|a - n| / max(|a|, |n|, rms)`, where `rms` is the root mean
/// square of the analytic gradient tensor the index belongs to: comparisons
/// on coordinates whose true gradient is far below the tensor's scale are
/// judged against that scale rather than against float noise.
///
/// `samples_per_tensor` of 0 means every index (use only on tiny networks).
pub fn finite_diff_check<F: Real>(
    state: &mut NetworkState<F>,
    batches: &[(Tensor4<F>, Vec<usize>)],
    spec: &LossSpec,
    samples_per_tensor: usize,
    sample_seed: u64,
) -> Result<GradCheckReport, NnetError> {
    let names = param_names(state);
    let lens = param_lens(state);
    let mut report = GradCheckReport {
        compared: 0,
        max_rel_err: 0.0,
        worst: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for (bi, (batch, labels)) in batches.iter().enumerate() {
        let step = bi as u64;
        let pass = forward(state, batch.clone(), Mode::Train { step })?;
        let out = loss_and_output_grads(spec, state, &pass, labels)?;
        let mut grads = backward(state, &pass, &out.dlogits, out.dsuper.as_deref());
        apply_regularizer_grads(spec, state, &mut grads);
        let flat: Vec<Vec<f64>> = grad_tensors(&grads)
            .into_iter()
            .map(|g| g.iter().map(|v| v.f64()).collect())
            .collect();
        drop(pass);

        for (t, len) in lens.iter().enumerate() {
            let g = &flat[t];
            let rms = (g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt();
            let indices: Vec<usize> = if samples_per_tensor == 0 || samples_per_tensor >= *len {
                (0..*len).collect()
            } else {
                let mut rng = Rng::new(Rng::mix(&[sample_seed, bi as u64, t as u64]));
                rng.permutation(*len).into_iter().take(samples_per_tensor).collect()
            };
            for i in indices {
                let orig = get_param(state, t, i);
                let h = H_SCALE * (1.0 + orig.f64().abs());
                set_param(state, t, i, F::c(orig.f64() + h));
                let up = loss_for_check(state, batch, labels, spec, step)?;
                set_param(state, t, i, F::c(orig.f64() - h));
                let dn = loss_for_check(state, batch, labels, spec, step)?;
                set_param(state, t, i, orig);
                let numeric = (up - dn) / (2.0 * h);
                let analytic = g[i];
                let denom = analytic.abs().max(numeric.abs()).max(rms).max(1e-12);
                let rel = (analytic - numeric).abs() / denom;
                report.compared += 1;
                if rel > report.max_rel_err {
                    report.max_rel_err = rel;
                    report.worst = format!("{}[{i}] (batch {bi})", names[t]);
                    report.worst_analytic = analytic;
                    report.worst_numeric = numeric;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::config::{LayerSpec, NetworkConfig};
    use super::super::network::build_network;
    use super::*;

    fn tiny_mixed_config(num_super: usize) -> NetworkConfig {
        NetworkConfig {
            input_h: 6,
            input_w: 6,
            input_channels: 1,
            layers: vec![
                LayerSpec::Conv {
                    out_channels: 3,
                    kernel: (3, 3),
                    stride: 1,
                    pad: 1,
                    relu: true,
                    batch_norm: true,
                    dropout: 0.25,
                },
                LayerSpec::MaxPool { kernel: 2, stride: 2, dropout: 0.2 },
                LayerSpec::Conv {
                    out_channels: 2,
                    kernel: (2, 2),
                    stride: 1,
                    pad: 0,
                    relu: true,
                    batch_norm: false,
                    dropout: 0.0,
                },
                LayerSpec::Flatten,
                LayerSpec::Full { width: 5, relu: true, batch_norm: true, dropout: 0.3 },
            ],
            num_classes: 3,
            num_superclasses: num_super,
        }
    }

    fn batches(n_batches: usize, bs: usize, classes: usize, seed: u64) -> Vec<(Tensor4<f64>, Vec<usize>)> {
        let mut rng = Rng::new(seed);
        (0..n_batches)
            .map(|_| {
                let data = (0..bs * 36).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
                let labels = (0..bs).map(|_| rng.index(classes)).collect();
                (Tensor4::from_data(bs, 1, 6, 6, data), labels)
            })
            .collect()
    }

    #[test]
    fn every_gradient_matches_finite_differences_basic() {
        let mut state = build_network::<f64>(tiny_mixed_config(0), 33).unwrap();
        let bs = batches(2, 4, 3, 100);
        let spec = LossSpec::Basic { alpha: 1e-3, global_decay: true };
        let report = finite_diff_check(&mut state, &bs, &spec, 0, 1).unwrap();
        assert!(
            report.max_rel_err < 1e-6,
            "max rel err {} at {} (analytic {}, numeric {}), {} comparisons",
            report.max_rel_err,
            report.worst,
            report.worst_analytic,
            report.worst_numeric,
            report.compared
        );
        let total: usize = param_lens(&state).iter().sum();
        assert_eq!(report.compared, 2 * total, "all indices of both batches");
    }

    #[test]
    fn every_gradient_matches_finite_differences_multitask() {
        let mut state = build_network::<f64>(tiny_mixed_config(2), 34).unwrap();
        let bs = batches(2, 4, 3, 200);
        let spec = LossSpec::Multitask {
            gamma: 0.6,
            alpha: 1e-3,
            beta: 1e-3,
            class_to_super: vec![0, 1, 1],
            global_decay: false,
        };
        let report = finite_diff_check(&mut state, &bs, &spec, 0, 2).unwrap();
        assert!(
            report.max_rel_err < 1e-6,
            "max rel err {} at {} (analytic {}, numeric {})",
            report.max_rel_err,
            report.worst,
            report.worst_analytic,
            report.worst_numeric
        );
    }

    #[test]
    fn probe_does_not_touch_running_stats() {
        let mut state = build_network::<f64>(tiny_mixed_config(0), 33).unwrap();
        let before = state.clone();
        let bs = batches(1, 4, 3, 100);
        finite_diff_check(&mut state, &bs, &LossSpec::basic(), 3, 1).unwrap();
        assert_eq!(state, before, "the checker must restore every parameter");
    }

    #[test]
    fn sampling_limits_comparisons() {
        let mut state = build_network::<f64>(tiny_mixed_config(0), 33).unwrap();
        let bs = batches(1, 4, 3, 100);
        let report = finite_diff_check(&mut state, &bs, &LossSpec::basic(), 2, 1).unwrap();
        let n_tensors = param_lens(&state).len();
        assert!(report.compared <= 2 * n_tensors);
    }
}
