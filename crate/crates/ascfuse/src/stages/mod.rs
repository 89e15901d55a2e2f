//! The pipeline stages. Each stage reads earlier artifacts from the
//! workdir, writes its own, and returns the workdir-relative paths it
//! produced so the runner can record them.

pub mod evaluate;
pub mod expand;
pub mod extract;
pub mod fuse;
pub mod report;
pub mod spectrogram;
pub mod synth;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use asc_core::dsp::SpectrogramKind;
use asc_core::nnet::{Dataset, Real};
use asc_core::numerics::read_tensor_file;

use crate::config::Experiment;
use crate::manifest::{DatasetManifest, Split};
use crate::PipelineError;

/// Resolves the manifest this experiment runs on: an external one when the
/// config names it, otherwise the one the synth stage wrote.
pub fn load_dataset(exp: &Experiment) -> Result<(DatasetManifest, PathBuf), PipelineError> {
    match &exp.manifest_path {
        Some(path) => DatasetManifest::load(path),
        None => DatasetManifest::load(exp.workdir.join("dataset").join("manifest.json")),
    }
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::StageFailed(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Workdir-relative form of a path, for stage records.
pub fn rel(exp: &Experiment, path: &Path) -> String {
    path.strip_prefix(&exp.workdir)
        .unwrap_or(path)
        .display()
        .to_string()
}

pub fn load_patch_index(exp: &Experiment) -> Result<spectrogram::PatchIndex, PipelineError> {
    let path = exp.workdir.join("patches").join("index.json");
    read_json(&path)
}

/// Patches of one spectrogram kind for one split, shaped for the network,
/// with the per-patch segment bookkeeping that voting and fusion need.
pub struct PatchSet<F: Real> {
    pub data: Dataset<F>,
    /// Segment ordinal (position within this split) of each patch row.
    pub segment_of: Vec<usize>,
    /// Segment ids indexed by those ordinals.
    pub segment_ids: Vec<String>,
    /// One label per segment, same indexing.
    pub segment_labels: Vec<usize>,
}

/// Loads every patch of `kind` in `split`, in index order, as one dataset.
pub fn build_dataset<F: Real>(
    exp: &Experiment,
    index: &spectrogram::PatchIndex,
    kind: SpectrogramKind,
    split: Split,
) -> Result<PatchSet<F>, PipelineError> {
    let size = exp.config.network.preset.input_size();
    let mut inputs: Vec<Vec<F>> = Vec::new();
    let mut labels = Vec::new();
    let mut segment_of = Vec::new();
    let mut segment_ids = Vec::new();
    let mut segment_labels = Vec::new();
    for entry in index.segments.iter().filter(|e| e.split == split) {
        let Some(patch_ref) = entry.kinds.get(kind.as_str()) else {
            return Err(PipelineError::StageFailed(format!(
                "segment {} has no {kind} patches; re-run the spectrogram stage",
                entry.id
            )));
        };
        let tensor = read_tensor_file(exp.workdir.join(&patch_ref.patches))?;
        if tensor.dims != [patch_ref.count, size, size] {
            return Err(PipelineError::StageFailed(format!(
                "{}: expected {} patches of {size}x{size}, found shape {:?}",
                patch_ref.patches, patch_ref.count, tensor.dims
            )));
        }
        let values = tensor.to_f64();
        let stride = size * size;
        let ordinal = segment_ids.len();
        for p in 0..patch_ref.count {
            inputs.push(values[p * stride..(p + 1) * stride].iter().map(|&v| F::c(v)).collect());
            labels.push(entry.label);
            segment_of.push(ordinal);
        }
        segment_ids.push(entry.id.clone());
        segment_labels.push(entry.label);
    }
    if inputs.is_empty() {
        return Err(PipelineError::StageFailed(format!(
            "no {split} patches of kind {kind} in the index"
        )));
    }
    let data = Dataset {
        inputs,
        channels: 1,
        height: size,
        width: size,
        labels,
        num_classes: index.class_names.len(),
    };
    data.validate()?;
    Ok(PatchSet { data, segment_of, segment_ids, segment_labels })
}

/// Directory helpers so stage modules agree on the layout.
pub fn dataset_dir(exp: &Experiment) -> PathBuf {
    exp.workdir.join("dataset")
}

pub fn spectrogram_dir(exp: &Experiment) -> PathBuf {
    exp.workdir.join("spectrograms")
}

pub fn patches_dir(exp: &Experiment) -> PathBuf {
    exp.workdir.join("patches")
}

pub fn models_dir(exp: &Experiment) -> PathBuf {
    exp.workdir.join("models")
}

pub fn expansion_dir(exp: &Experiment) -> PathBuf {
    exp.workdir.join("expansion")
}

pub fn features_dir(exp: &Experiment) -> PathBuf {
    exp.workdir.join("features")
}

pub fn fusion_dir(exp: &Experiment) -> PathBuf {
    exp.workdir.join("fusion")
}

pub fn evaluation_dir(exp: &Experiment) -> PathBuf {
    exp.workdir.join("evaluation")
}

pub fn report_dir(exp: &Experiment) -> PathBuf {
    exp.workdir.join("report")
}
