//! Two-file checkpoints: a JSON description next to a binary weights file of
//! concatenated tensor records. Optimizer moments are deliberately not saved;
//! resuming training starts them fresh.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::layers::{ConvParams, FullParams, LayerParams};
use super::network::{build_network, NetworkState};
use super::real::Real;
use super::NnetError;
use crate::numerics::{read_tensor, write_tensor, Dtype};

const FORMAT: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dims: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: u32,
    dtype: String,
    epoch: usize,
    seed: u64,
    config: NetworkConfig,
    tensors: Vec<TensorEntry>,
}

fn dtype_name(d: Dtype) -> &'static str {
    match d {
        Dtype::F32 => "f32",
        Dtype::F64 => "f64",
    }
}

/// `(json_path, weights_path)` for a checkpoint named `name` in `dir`.
pub fn checkpoint_paths<P: AsRef<Path>>(dir: P, name: &str) -> (PathBuf, PathBuf) {
    let dir = dir.as_ref();
    (dir.join(format!("{name}.ckpt.json")), dir.join(format!("{name}.weights.atns")))
}

/// Every stored tensor in canonical order: layer parameters including batch
/// norm running statistics, then the heads.
fn tensor_manifest<F: Real>(state: &NetworkState<F>) -> Vec<(String, Vec<usize>, Vec<F>)> {
    let mut out: Vec<(String, Vec<usize>, Vec<F>)> = Vec::new();
    for (i, (spec, lp)) in state.config.layers.iter().zip(&state.layers).enumerate() {
        let in_c = state.plan.shapes[i].0;
        match (spec, lp) {
            (
                &super::config::LayerSpec::Conv { out_channels, kernel, .. },
                LayerParams::Conv(ConvParams { weight, bias, bn }),
            ) => {
                out.push((
                    format!("layer{i}.weight"),
                    vec![out_channels, in_c, kernel.0, kernel.1],
                    weight.clone(),
                ));
                if let Some(b) = bias {
                    out.push((format!("layer{i}.bias"), vec![out_channels], b.clone()));
                }
                if let Some(bn) = bn {
                    out.push((format!("layer{i}.gamma"), vec![out_channels], bn.gamma.clone()));
                    out.push((format!("layer{i}.beta"), vec![out_channels], bn.beta.clone()));
                    out.push((
                        format!("layer{i}.running_mean"),
                        vec![out_channels],
                        bn.running_mean.clone(),
                    ));
                    out.push((
                        format!("layer{i}.running_var"),
                        vec![out_channels],
                        bn.running_var.clone(),
                    ));
                }
            }
            (
                &super::config::LayerSpec::Full { width, .. },
                LayerParams::Full(FullParams { weight, bias, bn }),
            ) => {
                out.push((format!("layer{i}.weight"), vec![width, in_c], weight.clone()));
                if let Some(b) = bias {
                    out.push((format!("layer{i}.bias"), vec![width], b.clone()));
                }
                if let Some(bn) = bn {
                    out.push((format!("layer{i}.gamma"), vec![width], bn.gamma.clone()));
                    out.push((format!("layer{i}.beta"), vec![width], bn.beta.clone()));
                    out.push((format!("layer{i}.running_mean"), vec![width], bn.running_mean.clone()));
                    out.push((format!("layer{i}.running_var"), vec![width], bn.running_var.clone()));
                }
            }
            _ => {}
        }
    }
    out.push((
        "head_w.weight".into(),
        vec![state.head_w.rows, state.head_w.cols],
        state.head_w.weight.clone(),
    ));
    out.push(("head_w.bias".into(), vec![state.head_w.rows], state.head_w.bias.clone()));
    if let Some(u) = &state.head_u {
        out.push(("head_u.weight".into(), vec![u.rows, u.cols], u.weight.clone()));
        out.push(("head_u.bias".into(), vec![u.rows], u.bias.clone()));
    }
    out
}

pub fn save_checkpoint<F: Real, P: AsRef<Path>>(
    state: &NetworkState<F>,
    dir: P,
    name: &str,
) -> Result<(), NnetError> {
    let (json_path, weights_path) = checkpoint_paths(&dir, name);
    let manifest = tensor_manifest(state);
    let header = CheckpointHeader {
        format: FORMAT,
        dtype: dtype_name(F::DTYPE).to_string(),
        epoch: state.epoch,
        seed: state.seed,
        config: state.config.clone(),
        tensors: manifest
            .iter()
            .map(|(name, dims, _)| TensorEntry { name: name.clone(), dims: dims.clone() })
            .collect(),
    };
    let mut jf = BufWriter::new(File::create(&json_path)?);
    serde_json::to_writer_pretty(&mut jf, &header)?;
    jf.flush()?;
    let mut wf = BufWriter::new(File::create(&weights_path)?);
    for (_, dims, data) in manifest {
        write_tensor(&mut wf, &F::tensor(dims, data))?;
    }
    wf.flush()?;
    Ok(())
}

pub fn load_checkpoint<F: Real, P: AsRef<Path>>(
    dir: P,
    name: &str,
) -> Result<NetworkState<F>, NnetError> {
    let (json_path, weights_path) = checkpoint_paths(&dir, name);
    let header: CheckpointHeader = serde_json::from_reader(BufReader::new(File::open(&json_path)?))?;
    if header.format != FORMAT {
        return Err(NnetError::BadCheckpoint(format!("unknown format {}", header.format)));
    }
    if header.dtype != dtype_name(F::DTYPE) {
        return Err(NnetError::BadCheckpoint(format!(
            "checkpoint holds {} weights, requested {}",
            header.dtype,
            dtype_name(F::DTYPE)
        )));
    }
    let mut state = build_network::<F>(header.config, header.seed)?;
    state.epoch = header.epoch;
    let expected = tensor_manifest(&state);
    if expected.len() != header.tensors.len() {
        return Err(NnetError::BadCheckpoint(format!(
            "{} tensors listed, network needs {}",
            header.tensors.len(),
            expected.len()
        )));
    }
    let mut reader = BufReader::new(File::open(&weights_path)?);
    let mut loaded: Vec<Vec<F>> = Vec::with_capacity(expected.len());
    for ((name, dims, _), entry) in expected.iter().zip(&header.tensors) {
        if entry.name != *name || entry.dims != *dims {
            return Err(NnetError::BadCheckpoint(format!(
                "tensor {} {:?} does not match network slot {} {:?}",
                entry.name, entry.dims, name, dims
            )));
        }
        let record = read_tensor(&mut reader)?;
        if record.dims != *dims {
            return Err(NnetError::BadCheckpoint(format!(
                "record for {} has dims {:?}, expected {:?}",
                name, record.dims, dims
            )));
        }
        let data = F::from_tensor(&record).ok_or_else(|| {
            NnetError::BadCheckpoint(format!("record for {name} has the wrong dtype"))
        })?;
        loaded.push(data);
    }
    assign(&mut state, loaded);
    Ok(state)
}

fn assign<F: Real>(state: &mut NetworkState<F>, mut loaded: Vec<Vec<F>>) {
    let mut it = loaded.drain(..);
    let mut next = || it.next().expect("count was validated");
    for lp in state.layers.iter_mut() {
        match lp {
            LayerParams::Conv(ConvParams { weight, bias, bn })
            | LayerParams::Full(FullParams { weight, bias, bn }) => {
                *weight = next();
                if let Some(b) = bias {
                    *b = next();
                }
                if let Some(bn) = bn {
                    bn.gamma = next();
                    bn.beta = next();
                    bn.running_mean = next();
                    bn.running_var = next();
                }
            }
            _ => {}
        }
    }
    state.head_w.weight = next();
    state.head_w.bias = next();
    if let Some(u) = state.head_u.as_mut() {
        u.weight = next();
        u.bias = next();
    }
}
