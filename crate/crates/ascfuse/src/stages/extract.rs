//! Stage: run every patch through a trained model and store the deep
//! feature rows the fusion stage consumes.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use asc_core::dsp::SpectrogramKind;
use asc_core::nnet::{extract_features, load_checkpoint, Real};
use asc_core::numerics::{write_tensor_file, Tensor};

use crate::config::{Dtype, Experiment};
use crate::manifest::Split;
use crate::PipelineError;

use super::train::model_name;
use super::{build_dataset, features_dir, load_patch_index, models_dir, rel, write_json_pretty};

/// Sidecar of one stored feature matrix: which patch row belongs to which
/// segment, and what the segments are.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub kind: String,
    pub split: String,
    /// Checkpoint the features came out of.
    pub model: String,
    pub feature_len: usize,
    /// Per patch row, the ordinal of its segment within the split.
    pub segment_of: Vec<usize>,
    /// Per patch row label.
    pub labels: Vec<usize>,
    /// Segment ids by ordinal.
    pub segment_ids: Vec<String>,
    /// Segment labels by ordinal.
    pub segment_labels: Vec<usize>,
}

pub fn feature_paths(exp: &Experiment, kind: SpectrogramKind, split: Split) -> (PathBuf, PathBuf) {
    let dir = features_dir(exp);
    let stem = format!("{kind}-{split}");
    (dir.join(format!("{stem}.atns")), dir.join(format!("{stem}.json")))
}

/// The kinds any configured pair touches, in first-use order.
pub fn kinds_in_pairs(pairs: &[[SpectrogramKind; 2]]) -> Vec<SpectrogramKind> {
    let mut kinds = Vec::new();
    for pair in pairs {
        for &k in pair {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
    }
    kinds
}

pub fn run(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    match exp.config.network.dtype {
        Dtype::F32 => typed::<f32>(exp),
        Dtype::F64 => typed::<f64>(exp),
    }
}

fn typed<F: Real>(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    let pairs = exp.config.fusion_pairs();
    if pairs.is_empty() {
        return Err(PipelineError::StageFailed(
            "no fusion pairs are configured; there is nothing to extract features for".into(),
        ));
    }
    let flavor = exp.config.fusion.features_from;
    let index = load_patch_index(exp)?;
    let models = models_dir(exp);
    fs::create_dir_all(features_dir(exp))?;
    let batch = exp.config.training.basic.batch_size;
    let mut outputs = Vec::new();
    for kind in kinds_in_pairs(&pairs) {
        let name = model_name(kind, flavor);
        let state = load_checkpoint::<F, _>(&models, &name)?;
        for split in [Split::Train, Split::Test] {
            let set = build_dataset::<F>(exp, &index, kind, split)?;
            let indices: Vec<usize> = (0..set.data.len()).collect();
            let feats = extract_features(&state, &set.data, &indices, batch)?;
            let len = feats.len() / set.data.len();
            let tensor = Tensor::f64(
                vec![set.data.len(), len],
                feats.iter().map(|v| v.f64()).collect(),
            );
            let (atns_path, json_path) = feature_paths(exp, kind, split);
            write_tensor_file(&atns_path, &tensor)?;
            let meta = FeatureMeta {
                kind: kind.as_str().to_string(),
                split: split.as_str().to_string(),
                model: name.clone(),
                feature_len: len,
                segment_of: set.segment_of,
                labels: set.data.labels.clone(),
                segment_ids: set.segment_ids,
                segment_labels: set.segment_labels,
            };
            write_json_pretty(&json_path, &meta)?;
            outputs.push(rel(exp, &atns_path));
            outputs.push(rel(exp, &json_path));
        }
    }
    Ok(outputs)
}
