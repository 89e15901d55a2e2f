//! Stage: build the class-confusion affinity of each trained basic model
//! and group its classes into super-classes by spectral clustering.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use asc_core::dsp::SpectrogramKind;
use asc_core::labelexp::{
    choose_num_superclasses, confusion_counts, row_normalize, spectral_partition, symmetrize,
    Partition,
};
use asc_core::nnet::{argmax_rows, load_checkpoint, predict_probs, stratified_split, Real};
use asc_core::numerics::Matrix;

use crate::config::{ConfusionSplit, Dtype, Experiment, ModelFlavor};
use crate::manifest::Split;
use crate::PipelineError;

use super::train::model_name;
use super::{
    build_dataset, expansion_dir, load_patch_index, models_dir, read_json, rel, write_json_pretty,
};

/// Stored class grouping along with where it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionFile {
    pub num_superclasses: usize,
    pub subsets: Vec<Vec<usize>>,
    /// Checkpoint whose confusion produced the grouping.
    pub source_model: String,
    /// Seed the clustering ran under.
    pub seed: u64,
}

impl PartitionFile {
    pub fn partition(&self) -> Result<Partition, PipelineError> {
        let num_classes: usize = self.subsets.iter().map(|s| s.len()).sum();
        let mut class_to_super = vec![0usize; num_classes];
        for (m, subset) in self.subsets.iter().enumerate() {
            for &c in subset {
                if c >= num_classes {
                    return Err(PipelineError::StageFailed(format!(
                        "partition file lists class {c} but covers only {num_classes} classes"
                    )));
                }
                class_to_super[c] = m;
            }
        }
        let partition = Partition {
            num_superclasses: self.num_superclasses,
            subsets: self.subsets.clone(),
            class_to_super,
        };
        partition.validate(num_classes)?;
        Ok(partition)
    }
}

pub fn partition_path(exp: &Experiment, kind: SpectrogramKind) -> PathBuf {
    expansion_dir(exp).join(format!("{kind}.json"))
}

pub fn read_partition(exp: &Experiment, kind: SpectrogramKind) -> Result<Partition, PipelineError> {
    let file: PartitionFile = read_json(&partition_path(exp, kind))?;
    file.partition()
}

fn write_confusion_csv(
    path: &PathBuf,
    names: &[String],
    counts: &Matrix,
) -> Result<(), PipelineError> {
    let mut text = String::from("true");
    for name in names {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (i, name) in names.iter().enumerate() {
        text.push_str(name);
        for j in 0..names.len() {
            text.push_str(&format!(",{}", counts[(i, j)] as usize));
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn run(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    match exp.config.network.dtype {
        Dtype::F32 => typed::<f32>(exp),
        Dtype::F64 => typed::<f64>(exp),
    }
}

fn typed<F: Real>(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    let index = load_patch_index(exp)?;
    let models = models_dir(exp);
    let dir = expansion_dir(exp);
    fs::create_dir_all(&dir)?;
    let expansion = &exp.config.expansion;
    let num_classes = index.class_names.len();
    let mut outputs = Vec::new();
    for &kind in &exp.config.dsp.kinds {
        let set = build_dataset::<F>(exp, &index, kind, Split::Train)?;
        let source = model_name(kind, ModelFlavor::Basic);
        let state = load_checkpoint::<F, _>(&models, &source)?;

        // The same split the basic run trained under, so the confusion can
        // come from patches the model never fit.
        let (train_idx, val_idx) = stratified_split(
            &set.data.labels,
            num_classes,
            exp.config.training.basic.val_fraction,
            exp.train_seed(kind),
        )?;
        let eval_idx = match expansion.confusion_split {
            ConfusionSplit::Validation => val_idx,
            ConfusionSplit::Training => train_idx,
        };
        let batch = exp.config.training.basic.batch_size;
        let probs = predict_probs(&state, &set.data, &eval_idx, batch)?;
        let preds = argmax_rows(&probs, num_classes);
        let truth = set.data.labels_for(&eval_idx);
        let counts = confusion_counts(&truth, &preds, num_classes)?;
        let affinity = symmetrize(&row_normalize(&counts));

        let n = if expansion.num_superclasses > 0 {
            expansion.num_superclasses
        } else {
            choose_num_superclasses(&affinity)?
        };
        let seed = exp.expand_seed(kind);
        let partition = spectral_partition(&affinity, n, seed)?;

        let file = PartitionFile {
            num_superclasses: partition.num_superclasses,
            subsets: partition.subsets.clone(),
            source_model: source,
            seed,
        };
        let json_path = partition_path(exp, kind);
        write_json_pretty(&json_path, &file)?;
        let csv_path = dir.join(format!("{kind}.confusion.csv"));
        write_confusion_csv(&csv_path, &index.class_names, &counts)?;

        outputs.push(rel(exp, &json_path));
        outputs.push(rel(exp, &csv_path));
    }
    Ok(outputs)
}
