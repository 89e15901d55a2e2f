//! Network state, initialization, forward and backward passes.

use serde::{Deserialize, Serialize};

use crate::numerics::Rng;

use super::config::{LayerSpec, NetworkConfig, ShapePlan};
use super::layers::{
    bn_apply, bn_backward, bn_batch_stats, conv_backward_input, conv_backward_params,
    conv_forward, full_backward_input, full_backward_params, full_forward, pool_backward,
    pool_forward, BatchNormState, ConvParams, FullParams, Head, LayerParams, BN_EPS, BN_MOMENTUM,
};
use super::real::Real;
use super::tensor4::Tensor4;
use super::NnetError;

const INIT_TAG: u64 = 0x11;
const DROPOUT_TAG: u64 = 0xD0;

/// Complete learnable state of a network plus the static plan it was built
/// from. Cloning snapshots every weight, which the trainer uses to keep the
/// best validation model.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState<F> {
    pub config: NetworkConfig,
    pub plan: ShapePlan,
    pub layers: Vec<LayerParams<F>>,
    /// Class head, one row per class over the flattened top features.
    pub head_w: Head<F>,
    /// Optional coarse-label head sharing the same features.
    pub head_u: Option<Head<F>>,
    pub seed: u64,
    pub epoch: usize,
}

fn he_uniform<F: Real>(rng: &mut Rng, fan_in: usize, len: usize) -> Vec<F> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| F::c((rng.next_f64() * 2.0 - 1.0) * limit)).collect()
}

fn new_head<F: Real>(rows: usize, cols: usize, rng: &mut Rng) -> Head<F> {
    Head { rows, cols, weight: he_uniform(rng, cols, rows * cols), bias: vec![F::zero(); rows] }
}

/// Builds a freshly initialized network. Weights are He-uniform keyed by
/// `(seed, layer index)`, biases and batch-norm offsets start at zero,
/// batch-norm scales at one.
pub fn build_network<F: Real>(config: NetworkConfig, seed: u64) -> Result<NetworkState<F>, NnetError> {
    let plan = config.plan()?;
    let mut layers = Vec::with_capacity(config.layers.len());
    for (i, spec) in config.layers.iter().enumerate() {
        let mut rng = Rng::new(Rng::mix(&[seed, INIT_TAG, i as u64]));
        let in_c = plan.shapes[i].0;
        let params = match *spec {
            LayerSpec::Conv { out_channels, kernel, batch_norm, .. } => {
                let fan_in = in_c * kernel.0 * kernel.1;
                LayerParams::Conv(ConvParams {
                    weight: he_uniform(&mut rng, fan_in, out_channels * fan_in),
                    bias: (!batch_norm).then(|| vec![F::zero(); out_channels]),
                    bn: batch_norm.then(|| BatchNormState::identity(out_channels)),
                })
            }
            LayerSpec::MaxPool { .. } => LayerParams::Pool,
            LayerSpec::Flatten => LayerParams::Flatten,
            LayerSpec::Full { width, batch_norm, .. } => LayerParams::Full(FullParams {
                weight: he_uniform(&mut rng, in_c, width * in_c),
                bias: (!batch_norm).then(|| vec![F::zero(); width]),
                bn: batch_norm.then(|| BatchNormState::identity(width)),
            }),
        };
        layers.push(params);
    }
    let n = config.layers.len() as u64;
    let mut rng_w = Rng::new(Rng::mix(&[seed, INIT_TAG, n]));
    let head_w = new_head(config.num_classes, plan.feature_len, &mut rng_w);
    let head_u = (config.num_superclasses > 0).then(|| {
        let mut rng_u = Rng::new(Rng::mix(&[seed, INIT_TAG, n + 1]));
        new_head(config.num_superclasses, plan.feature_len, &mut rng_u)
    });
    Ok(NetworkState { config, plan, layers, head_w, head_u, seed, epoch: 0 })
}

impl<F: Real> NetworkState<F> {
    /// Installs (or replaces) the coarse-label head and records its row count
    /// in the config. The head must read the same feature width.
    pub fn install_super_head(&mut self, head: Head<F>) -> Result<(), NnetError> {
        if head.cols != self.plan.feature_len {
            return Err(NnetError::ShapeMismatch(format!(
                "coarse head reads {} features, network produces {}",
                head.cols, self.plan.feature_len
            )));
        }
        if head.rows < 2 {
            return Err(NnetError::BadConfig("coarse head needs at least 2 rows".into()));
        }
        if head.weight.len() != head.rows * head.cols || head.bias.len() != head.rows {
            return Err(NnetError::ShapeMismatch("coarse head payload does not match dims".into()));
        }
        self.config.num_superclasses = head.rows;
        self.head_u = Some(head);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Batch statistics, active dropout keyed by `step`, caches kept.
    Train { step: u64 },
    /// Running statistics, dropout off, caches dropped.
    Eval,
}

#[derive(Debug, Default)]
pub(super) struct LayerCache<F> {
    /// Pre-norm linear output of conv/full layers (train mode only).
    pub lin: Option<Tensor4<F>>,
    pub bn_mean: Vec<F>,
    pub bn_var: Vec<F>,
    pub bn_inv_std: Vec<F>,
    pub pool_argmax: Option<Vec<u32>>,
    pub dropout_mask: Option<Vec<F>>,
}

/// Everything produced by one forward call. `boundaries[0]` is the input
/// batch, `boundaries[i + 1]` the output of layer `i`; the classifier heads
/// read the last boundary flattened per sample.
#[derive(Debug)]
pub struct Pass<F> {
    pub(super) boundaries: Vec<Tensor4<F>>,
    pub(super) caches: Vec<LayerCache<F>>,
    /// Row-major batch-by-classes.
    pub logits: Vec<F>,
    pub probs: Vec<F>,
    pub super_logits: Option<Vec<F>>,
    pub super_probs: Option<Vec<F>>,
}

impl<F: Real> Pass<F> {
    /// Flattened top-of-stack features, row-major batch-by-feature_len.
    /// These are the values the deep-feature fusion consumes.
    pub fn features(&self) -> &[F] {
        &self.boundaries.last().unwrap().data
    }

    pub fn batch_len(&self) -> usize {
        self.boundaries[0].n
    }
}

fn softmax_rows<F: Real>(logits: &[F], cols: usize) -> Vec<F> {
    let mut probs = vec![F::zero(); logits.len()];
    for (prow, lrow) in probs.chunks_mut(cols).zip(logits.chunks(cols)) {
        let max = lrow.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
        let mut sum = 0f64;
        let mut e = vec![0f64; cols];
        for (i, v) in lrow.iter().enumerate() {
            let x = (v.f64() - max).exp();
            e[i] = x;
            sum += x;
        }
        for (p, x) in prow.iter_mut().zip(e) {
            *p = F::c(x / sum);
        }
    }
    probs
}

fn relu_gate_and_apply<F: Real>(act: &mut Tensor4<F>) {
    for v in act.data.iter_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

fn dropout_mask<F: Real>(seed: u64, step: u64, layer: usize, p: f64, len: usize) -> Vec<F> {
    let mut rng = Rng::new(Rng::mix(&[seed, DROPOUT_TAG, step, layer as u64]));
    let scale = F::c(1.0 / (1.0 - p));
    (0..len).map(|_| if rng.next_f64() < p { F::zero() } else { scale }).collect()
}

fn eval_inv_std<F: Real>(bn: &BatchNormState<F>) -> Vec<F> {
    bn.running_var.iter().map(|v| F::c(1.0 / (v.f64() + BN_EPS).sqrt())).collect()
}

/// Runs the stack and both heads on one batch. The batch is moved into the
/// returned pass as `boundaries[0]`. Running statistics are NOT updated here;
/// the trainer calls [`apply_running_update`] after a train-mode pass so that
/// loss probes (gradient checks) stay side-effect free.
pub fn forward<F: Real>(
    state: &NetworkState<F>,
    batch: Tensor4<F>,
    mode: Mode,
) -> Result<Pass<F>, NnetError> {
    let want = state.plan.shapes[0];
    if (batch.c, batch.h, batch.w) != want {
        return Err(NnetError::ShapeMismatch(format!(
            "batch is {}x{}x{}, network expects {}x{}x{}",
            batch.c, batch.h, batch.w, want.0, want.1, want.2
        )));
    }
    if batch.n == 0 {
        return Err(NnetError::ShapeMismatch("empty batch".into()));
    }
    let train = matches!(mode, Mode::Train { .. });
    let mut boundaries = Vec::with_capacity(state.layers.len() + 1);
    let mut caches = Vec::with_capacity(state.layers.len());
    boundaries.push(batch);
    for (i, (spec, params)) in state.config.layers.iter().zip(&state.layers).enumerate() {
        let input = &boundaries[i];
        let (oc, oh, ow) = state.plan.shapes[i + 1];
        let mut cache = LayerCache::default();
        let mut act = match (spec, params) {
            (
                &LayerSpec::Conv { out_channels, kernel, stride, pad, relu, .. },
                LayerParams::Conv(p),
            ) => {
                let lin = conv_forward(
                    input,
                    &p.weight,
                    p.bias.as_deref(),
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    oh,
                    ow,
                );
                norm_and_activate(lin, p.bn.as_ref(), relu, train, &mut cache)
            }
            (&LayerSpec::Full { width, relu, .. }, LayerParams::Full(p)) => {
                let lin = full_forward(input, &p.weight, p.bias.as_deref(), width);
                norm_and_activate(lin, p.bn.as_ref(), relu, train, &mut cache)
            }
            (&LayerSpec::MaxPool { kernel, stride, .. }, LayerParams::Pool) => {
                let (out, argmax) = pool_forward(input, kernel, stride);
                if train {
                    cache.pool_argmax = Some(argmax);
                }
                out
            }
            (&LayerSpec::Flatten, LayerParams::Flatten) => {
                input.clone().reshape(oc, oh, ow)
            }
            _ => unreachable!("layer specs and params are built together"),
        };
        let p_drop = spec.dropout();
        if p_drop > 0.0 {
            if let Mode::Train { step } = mode {
                let mask = dropout_mask::<F>(state.seed, step, i, p_drop, act.numel());
                for (v, m) in act.data.iter_mut().zip(&mask) {
                    *v *= *m;
                }
                cache.dropout_mask = Some(mask);
            }
        }
        boundaries.push(act);
        caches.push(cache);
    }
    let top = boundaries.last().unwrap();
    let logits_t = full_forward(top, &state.head_w.weight, Some(&state.head_w.bias), state.head_w.rows);
    let probs = softmax_rows(&logits_t.data, state.head_w.rows);
    let (super_logits, super_probs) = match &state.head_u {
        Some(u) => {
            let lt = full_forward(top, &u.weight, Some(&u.bias), u.rows);
            let p = softmax_rows(&lt.data, u.rows);
            (Some(lt.data), Some(p))
        }
        None => (None, None),
    };
    Ok(Pass { boundaries, caches, logits: logits_t.data, probs, super_logits, super_probs })
}

/// Shared conv/full epilogue: batch norm, ReLU. Fills the cache in train
/// mode. Not responsible for dropout.
fn norm_and_activate<F: Real>(
    lin: Tensor4<F>,
    bn: Option<&BatchNormState<F>>,
    relu: bool,
    train: bool,
    cache: &mut LayerCache<F>,
) -> Tensor4<F> {
    let mut act = match bn {
        Some(bn) => {
            if train {
                let (mean, var, inv_std) = bn_batch_stats(&lin);
                let mut act = lin.clone();
                bn_apply(&mut act, &mean, &inv_std, &bn.gamma, &bn.beta);
                cache.bn_mean = mean;
                cache.bn_var = var;
                cache.bn_inv_std = inv_std;
                cache.lin = Some(lin);
                act
            } else {
                let mut act = lin;
                let inv_std = eval_inv_std(bn);
                bn_apply(&mut act, &bn.running_mean, &inv_std, &bn.gamma, &bn.beta);
                act
            }
        }
        None => {
            if train {
                cache.lin = Some(lin.clone());
            }
            lin
        }
    };
    if relu {
        relu_gate_and_apply(&mut act);
    }
    act
}

/// Folds the batch statistics of a train-mode pass into each batch-norm
/// layer's running estimates: `r = 0.9 r + 0.1 batch`.
pub fn apply_running_update<F: Real>(state: &mut NetworkState<F>, pass: &Pass<F>) {
    let keep = F::c(BN_MOMENTUM);
    let take = F::c(1.0 - BN_MOMENTUM);
    for (params, cache) in state.layers.iter_mut().zip(&pass.caches) {
        let bn = match params {
            LayerParams::Conv(p) => p.bn.as_mut(),
            LayerParams::Full(p) => p.bn.as_mut(),
            _ => None,
        };
        if let Some(bn) = bn {
            if cache.bn_mean.is_empty() {
                continue;
            }
            for c in 0..bn.running_mean.len() {
                bn.running_mean[c] = keep * bn.running_mean[c] + take * cache.bn_mean[c];
                bn.running_var[c] = keep * bn.running_var[c] + take * cache.bn_var[c];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads<F> {
    pub weight: Vec<F>,
    pub bias: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<F> {
    pub weight: Vec<F>,
    pub bias: Option<Vec<F>>,
    pub gamma: Option<Vec<F>>,
    pub beta: Option<Vec<F>>,
}

/// Gradients mirroring [`NetworkState`]: `layers[i]` is `Some` exactly when
/// layer `i` has parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<Option<LayerGrads<F>>>,
    pub head_w: HeadGrads<F>,
    pub head_u: Option<HeadGrads<F>>,
}

/// Backpropagates head-output gradients through the whole network.
/// `dlogits` (and `dsuper` when the coarse head exists) are gradients of the
/// objective with respect to the raw logits, row-major batch-by-classes.
/// Needs a train-mode pass; regularizer gradients are added separately.
pub fn backward<F: Real>(
    state: &NetworkState<F>,
    pass: &Pass<F>,
    dlogits: &[F],
    dsuper: Option<&[F]>,
) -> Gradients<F> {
    let n = pass.batch_len();
    let top = pass.boundaries.last().unwrap();
    let feature_len = state.plan.feature_len;

    let dlog_t = Tensor4::from_data(n, state.head_w.rows, 1, 1, dlogits.to_vec());
    let (dw, db) = full_backward_params(top, &dlog_t, true);
    let head_w = HeadGrads { weight: dw, bias: db.unwrap() };
    let mut dfeat = full_backward_input(&dlog_t, &state.head_w.weight, feature_len);

    let head_u = match (&state.head_u, dsuper) {
        (Some(u), Some(ds)) => {
            let ds_t = Tensor4::from_data(n, u.rows, 1, 1, ds.to_vec());
            let (dwu, dbu) = full_backward_params(top, &ds_t, true);
            let dfeat_u = full_backward_input(&ds_t, &u.weight, feature_len);
            for (a, b) in dfeat.data.iter_mut().zip(dfeat_u.data) {
                *a += b;
            }
            Some(HeadGrads { weight: dwu, bias: dbu.unwrap() })
        }
        (None, None) => None,
        (Some(_), None) => panic!("coarse head present but no dsuper supplied"),
        (None, Some(_)) => panic!("dsuper supplied but network has no coarse head"),
    };

    let mut dcur = dfeat.reshape(top.c, top.h, top.w);
    let mut layer_grads: Vec<Option<LayerGrads<F>>> = Vec::with_capacity(state.layers.len());
    layer_grads.resize_with(state.layers.len(), || None);

    for i in (0..state.layers.len()).rev() {
        let spec = &state.config.layers[i];
        let cache = &pass.caches[i];
        let input = &pass.boundaries[i];
        if let Some(mask) = &cache.dropout_mask {
            for (v, m) in dcur.data.iter_mut().zip(mask) {
                *v *= *m;
            }
        }
        match (spec, &state.layers[i]) {
            (&LayerSpec::Conv { kernel, stride, pad, relu, .. }, LayerParams::Conv(p)) => {
                let lin = cache.lin.as_ref().expect("backward needs a train-mode pass");
                if relu {
                    gate_by_activation(&mut dcur, lin, p.bn.as_ref(), cache);
                }
                let (dgamma, dbeta) = match &p.bn {
                    Some(bn) => {
                        let (dg, dbt) = bn_backward(
                            &mut dcur,
                            lin,
                            &cache.bn_mean,
                            &cache.bn_inv_std,
                            &bn.gamma,
                        );
                        (Some(dg), Some(dbt))
                    }
                    None => (None, None),
                };
                let (dw, db) =
                    conv_backward_params(input, &dcur, kernel, stride, pad, p.bias.is_some());
                layer_grads[i] = Some(LayerGrads { weight: dw, bias: db, gamma: dgamma, beta: dbeta });
                if i > 0 {
                    dcur = conv_backward_input(
                        &dcur,
                        &p.weight,
                        (input.c, input.h, input.w),
                        kernel,
                        stride,
                        pad,
                    );
                }
            }
            (&LayerSpec::Full { relu, .. }, LayerParams::Full(p)) => {
                let lin = cache.lin.as_ref().expect("backward needs a train-mode pass");
                if relu {
                    gate_by_activation(&mut dcur, lin, p.bn.as_ref(), cache);
                }
                let (dgamma, dbeta) = match &p.bn {
                    Some(bn) => {
                        let (dg, dbt) = bn_backward(
                            &mut dcur,
                            lin,
                            &cache.bn_mean,
                            &cache.bn_inv_std,
                            &bn.gamma,
                        );
                        (Some(dg), Some(dbt))
                    }
                    None => (None, None),
                };
                let (dw, db) = full_backward_params(input, &dcur, p.bias.is_some());
                layer_grads[i] = Some(LayerGrads { weight: dw, bias: db, gamma: dgamma, beta: dbeta });
                if i > 0 {
                    dcur = full_backward_input(&dcur, &p.weight, input.sample_len());
                }
            }
            (&LayerSpec::MaxPool { .. }, LayerParams::Pool) => {
                if i > 0 {
                    let argmax =
                        cache.pool_argmax.as_ref().expect("backward needs a train-mode pass");
                    dcur = pool_backward(&dcur, argmax, (input.c, input.h, input.w));
                }
            }
            (&LayerSpec::Flatten, LayerParams::Flatten) => {
                if i > 0 {
                    dcur = dcur.reshape(input.c, input.h, input.w);
                }
            }
            _ => unreachable!("layer specs and params are built together"),
        }
    }
    Gradients { layers: layer_grads, head_w, head_u }
}

/// Zeroes gradient entries where the layer's ReLU clamped. The activation
/// sign is recomputed from the cached pre-norm output and the layer's norm
/// parameters instead of caching another full activation map.
fn gate_by_activation<F: Real>(
    d: &mut Tensor4<F>,
    lin: &Tensor4<F>,
    bn: Option<&BatchNormState<F>>,
    cache: &LayerCache<F>,
) {
    match bn {
        Some(bn) => {
            let plane = d.h * d.w;
            let channels = d.c;
            let slen = d.sample_len();
            for n in 0..d.n {
                let base = n * slen;
                for c in 0..channels {
                    let (mu, is, g, b) =
                        (cache.bn_mean[c], cache.bn_inv_std[c], bn.gamma[c], bn.beta[c]);
                    for i in 0..plane {
                        let j = base + c * plane + i;
                        let pre = g * (lin.data[j] - mu) * is + b;
                        if pre <= F::zero() {
                            d.data[j] = F::zero();
                        }
                    }
                }
            }
        }
        None => {
            for (dv, lv) in d.data.iter_mut().zip(&lin.data) {
                if *lv <= F::zero() {
                    *dv = F::zero();
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

/// Canonical parameter traversal. The optimizer, the regularizers, the
/// checkpoint writer, and the gradient checker all walk parameters in this
/// exact order; [`grad_tensors`] yields the matching gradient sequence.
pub(super) fn param_tensors_mut<F: Real>(
    state: &mut NetworkState<F>,
) -> Vec<(ParamKind, &mut Vec<F>)> {
    let mut out = Vec::new();
    for lp in state.layers.iter_mut() {
        match lp {
            LayerParams::Conv(ConvParams { weight, bias, bn })
            | LayerParams::Full(FullParams { weight, bias, bn }) => {
                out.push((ParamKind::Weight, weight));
                if let Some(b) = bias.as_mut() {
                    out.push((ParamKind::Bias, b));
                }
                if let Some(bn) = bn.as_mut() {
                    out.push((ParamKind::Gamma, &mut bn.gamma));
                    out.push((ParamKind::Beta, &mut bn.beta));
                }
            }
            LayerParams::Pool | LayerParams::Flatten => {}
        }
    }
    out.push((ParamKind::Weight, &mut state.head_w.weight));
    out.push((ParamKind::Bias, &mut state.head_w.bias));
    if let Some(u) = state.head_u.as_mut() {
        out.push((ParamKind::Weight, &mut u.weight));
        out.push((ParamKind::Bias, &mut u.bias));
    }
    out
}

/// Tensor lengths in [`param_tensors_mut`] order, without borrowing mutably.
pub(super) fn param_lens<F: Real>(state: &NetworkState<F>) -> Vec<usize> {
    let mut out = Vec::new();
    for lp in &state.layers {
        match lp {
            LayerParams::Conv(ConvParams { weight, bias, bn })
            | LayerParams::Full(FullParams { weight, bias, bn }) => {
                out.push(weight.len());
                if let Some(b) = bias {
                    out.push(b.len());
                }
                if let Some(bn) = bn {
                    out.push(bn.gamma.len());
                    out.push(bn.beta.len());
                }
            }
            LayerParams::Pool | LayerParams::Flatten => {}
        }
    }
    out.push(state.head_w.weight.len());
    out.push(state.head_w.bias.len());
    if let Some(u) = &state.head_u {
        out.push(u.weight.len());
        out.push(u.bias.len());
    }
    out
}

/// Human-readable names in [`param_tensors_mut`] order.
pub(super) fn param_names<F: Real>(state: &NetworkState<F>) -> Vec<String> {
    let mut out = Vec::new();
    for (i, lp) in state.layers.iter().enumerate() {
        match lp {
            LayerParams::Conv(ConvParams { bias, bn, .. })
            | LayerParams::Full(FullParams { bias, bn, .. }) => {
                out.push(format!("layer{i}.weight"));
                if bias.is_some() {
                    out.push(format!("layer{i}.bias"));
                }
                if bn.is_some() {
                    out.push(format!("layer{i}.gamma"));
                    out.push(format!("layer{i}.beta"));
                }
            }
            LayerParams::Pool | LayerParams::Flatten => {}
        }
    }
    out.push("head_w.weight".into());
    out.push("head_w.bias".into());
    if state.head_u.is_some() {
        out.push("head_u.weight".into());
        out.push("head_u.bias".into());
    }
    out
}

/// Gradient tensors in the same order as [`param_tensors_mut`].
pub(super) fn grad_tensors<F: Real>(grads: &Gradients<F>) -> Vec<&Vec<F>> {
    let mut out = Vec::new();
    for lg in grads.layers.iter().flatten() {
        out.push(&lg.weight);
        if let Some(b) = &lg.bias {
            out.push(b);
        }
        if let Some(g) = &lg.gamma {
            out.push(g);
        }
        if let Some(b) = &lg.beta {
            out.push(b);
        }
    }
    out.push(&grads.head_w.weight);
    out.push(&grads.head_w.bias);
    if let Some(u) = &grads.head_u {
        out.push(&u.weight);
        out.push(&u.bias);
    }
    out
}

/// Class predictions from probability rows: argmax, lowest index on ties.
pub fn argmax_rows<F: Real>(probs: &[F], cols: usize) -> Vec<usize> {
    probs
        .chunks(cols)
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::config::vgg_mini;
    use super::*;

    fn tiny_config(bn: bool, dropout: f64) -> NetworkConfig {
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
                    batch_norm: bn,
                    dropout,
                },
                LayerSpec::MaxPool { kernel: 2, stride: 2, dropout: 0.0 },
            ],
            num_classes: 4,
            num_superclasses: 0,
        }
    }

    fn batch(n: usize, seed: u64) -> Tensor4<f64> {
        let mut rng = Rng::new(seed);
        Tensor4::from_data(n, 1, 6, 6, (0..n * 36).map(|_| rng.next_f64()).collect())
    }

    #[test]
    fn probabilities_sum_to_one() {
        let state = build_network::<f64>(tiny_config(true, 0.0), 7).unwrap();
        let pass = forward(&state, batch(3, 1), Mode::Eval).unwrap();
        for row in pass.probs.chunks(4) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn softmax_matches_hand_computation() {
        let p = softmax_rows(&[1.0f64, 2.0, 3.0], 3);
        let z: f64 = (1f64).exp() + (2f64).exp() + (3f64).exp();
        assert!((p[0] - (1f64).exp() / z).abs() < 1e-12);
        assert!((p[2] - (3f64).exp() / z).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_build() {
        let a = build_network::<f32>(vgg_mini(5), 42).unwrap();
        let b = build_network::<f32>(vgg_mini(5), 42).unwrap();
        assert_eq!(a, b);
        let c = build_network::<f32>(vgg_mini(5), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn train_pass_is_deterministic_per_step() {
        let state = build_network::<f64>(tiny_config(true, 0.4), 7).unwrap();
        let a = forward(&state, batch(4, 2), Mode::Train { step: 9 }).unwrap();
        let b = forward(&state, batch(4, 2), Mode::Train { step: 9 }).unwrap();
        assert_eq!(a.probs, b.probs);
        let c = forward(&state, batch(4, 2), Mode::Train { step: 10 }).unwrap();
        // a different step draws different dropout masks
        assert_ne!(a.probs, c.probs);
    }

    #[test]
    fn eval_ignores_dropout() {
        let state = build_network::<f64>(tiny_config(false, 0.5), 7).unwrap();
        let a = forward(&state, batch(4, 2), Mode::Eval).unwrap();
        let b = forward(&state, batch(4, 2), Mode::Eval).unwrap();
        assert_eq!(a.probs, b.probs);
        assert!(a.caches.iter().all(|c| c.dropout_mask.is_none()));
    }

    #[test]
    fn dropout_zeroes_roughly_p_fraction() {
        let mask = dropout_mask::<f64>(3, 1, 0, 0.3, 40_000);
        let zeros = mask.iter().filter(|m| **m == 0.0).count() as f64 / 40_000.0;
        assert!((zeros - 0.3).abs() < 0.02, "zero fraction {zeros}");
        let kept = mask.iter().find(|m| **m != 0.0).unwrap();
        assert!((*kept - 1.0 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn wrong_batch_shape_is_rejected() {
        let state = build_network::<f64>(tiny_config(true, 0.0), 7).unwrap();
        let bad = Tensor4::<f64>::zeros(2, 1, 5, 6);
        assert!(matches!(forward(&state, bad, Mode::Eval), Err(NnetError::ShapeMismatch(_))));
    }

    #[test]
    fn running_stats_track_batch_stats() {
        let mut state = build_network::<f64>(tiny_config(true, 0.0), 7).unwrap();
        let pass = forward(&state, batch(4, 2), Mode::Train { step: 0 }).unwrap();
        let batch_mean = pass.caches[0].bn_mean.clone();
        apply_running_update(&mut state, &pass);
        let bn = match &state.layers[0] {
            LayerParams::Conv(p) => p.bn.as_ref().unwrap(),
            _ => unreachable!(),
        };
        for c in 0..3 {
            let expect = 0.9 * 0.0 + 0.1 * batch_mean[c];
            assert!((bn.running_mean[c] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_rows(&[0.4f64, 0.4, 0.2], 3), vec![0]);
        assert_eq!(argmax_rows(&[0.1f64, 0.5, 0.4, 0.9, 0.05, 0.05], 3), vec![1, 0]);
    }

    #[test]
    fn coarse_head_dims_are_validated() {
        let mut state = build_network::<f64>(tiny_config(true, 0.0), 7).unwrap();
        let l = state.plan.feature_len;
        let bad = Head { rows: 2, cols: l + 1, weight: vec![0.0; 2 * (l + 1)], bias: vec![0.0; 2] };
        assert!(state.install_super_head(bad).is_err());
        let good = Head { rows: 2, cols: l, weight: vec![0.1; 2 * l], bias: vec![0.0; 2] };
        state.install_super_head(good).unwrap();
        assert_eq!(state.config.num_superclasses, 2);
        let pass = forward(&state, batch(2, 3), Mode::Eval).unwrap();
        assert!(pass.super_probs.is_some());
    }
}
