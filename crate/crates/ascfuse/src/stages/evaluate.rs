//! Stage: score every trained model on the test split, per patch and per
//! voted segment, and collect the fusion results into one summary.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use asc_core::fusion::{majority_vote, sample_accuracy, voted_accuracy};
use asc_core::nnet::{argmax_rows, load_checkpoint, predict_probs, Real};
use asc_core::numerics::Matrix;

use crate::config::{Dtype, Experiment, ModelFlavor};
use crate::manifest::Split;
use crate::PipelineError;

use super::fuse::{pair_report_path, PairReport};
use super::train::model_name;
use super::{
    build_dataset, evaluation_dir, load_patch_index, models_dir, read_json, rel, write_json_pretty,
};

/// Everything the report stage needs, in one file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsFile {
    pub config_hash: String,
    pub network: String,
    pub class_names: Vec<String>,
    pub models: Vec<ModelResult>,
    pub fusion: Vec<FusionResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelResult {
    pub kind: String,
    pub flavor: String,
    /// Fraction of patches classified correctly.
    pub sample_accuracy: f64,
    /// Fraction of segments whose patch vote lands on the right class.
    pub voting_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionResult {
    pub pair: String,
    pub feature_source: String,
    pub dim: usize,
    pub train_accuracy: f64,
    /// One decision per test segment.
    pub test_accuracy: f64,
}

pub fn results_path(exp: &Experiment) -> PathBuf {
    evaluation_dir(exp).join("results.json")
}

/// Per segment, the most common patch-level prediction; count ties fall to
/// the lowest class index.
fn modal_by_count(
    segment_of: &[usize],
    preds: &[usize],
    num_segments: usize,
    num_classes: usize,
) -> Vec<usize> {
    let mut counts = vec![vec![0usize; num_classes]; num_segments];
    for (&seg, &p) in segment_of.iter().zip(preds) {
        counts[seg][p] += 1;
    }
    counts
        .iter()
        .map(|c| {
            let mut best = 0;
            for j in 1..num_classes {
                if c[j] > c[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn run(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    match exp.config.network.dtype {
        Dtype::F32 => typed::<f32>(exp),
        Dtype::F64 => typed::<f64>(exp),
    }
}

fn typed<F: Real>(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    let index = load_patch_index(exp)?;
    let num_classes = index.class_names.len();
    let models = models_dir(exp);
    let dir = evaluation_dir(exp);
    fs::create_dir_all(&dir)?;
    let batch = exp.config.training.basic.batch_size;
    let mut outputs = Vec::new();

    let mut flavors = vec![ModelFlavor::Basic];
    if exp.config.expansion.enabled {
        flavors.push(ModelFlavor::Le);
    }

    let mut model_results = Vec::new();
    for &kind in &exp.config.dsp.kinds {
        let set = build_dataset::<F>(exp, &index, kind, Split::Test)?;
        let indices: Vec<usize> = (0..set.data.len()).collect();
        for &flavor in &flavors {
            let name = model_name(kind, flavor);
            let state = load_checkpoint::<F, _>(&models, &name)?;
            let probs = predict_probs(&state, &set.data, &indices, batch)?;
            let scores = Matrix::from_vec(
                set.data.len(),
                num_classes,
                probs.iter().map(|v| v.f64()).collect(),
            );
            let preds = argmax_rows(&probs, num_classes);

            let sample_acc = sample_accuracy(&preds, &set.data.labels);
            let voting_acc = voted_accuracy(&set.segment_of, &set.data.labels, &scores)?;
            model_results.push(ModelResult {
                kind: kind.as_str().to_string(),
                flavor: flavor.as_str().to_string(),
                sample_accuracy: sample_acc,
                voting_accuracy: voting_acc,
            });

            let modal = modal_by_count(&set.segment_of, &preds, set.segment_ids.len(), num_classes);
            let votes = majority_vote(&set.segment_of, &scores)?;
            let mut csv = String::from("segment_id,true,predicted(sample-major),predicted(voted)\n");
            for (seg, voted) in votes {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    set.segment_ids[seg], set.segment_labels[seg], modal[seg], voted
                ));
            }
            let csv_path = dir.join(format!("segments-{name}.csv"));
            fs::write(&csv_path, csv)?;
            outputs.push(rel(exp, &csv_path));
        }
    }

    let mut fusion_results = Vec::new();
    for pair in exp.config.fusion_pairs() {
        let report: PairReport = read_json(&pair_report_path(exp, pair))?;
        if report.config_hash != exp.hash {
            return Err(PipelineError::ConfigChanged {
                stage: "evaluate".into(),
                recorded: report.config_hash,
                current: exp.hash.clone(),
            });
        }
        fusion_results.push(FusionResult {
            pair: format!("{}+{}", report.pair[0], report.pair[1]),
            feature_source: report.feature_source,
            dim: report.dim,
            train_accuracy: report.train_accuracy,
            test_accuracy: report.test_accuracy,
        });
    }

    let results = ResultsFile {
        config_hash: exp.hash.clone(),
        network: exp.config.network.preset.as_str().to_string(),
        class_names: index.class_names.clone(),
        models: model_results,
        fusion: fusion_results,
    };
    let path = results_path(exp);
    write_json_pretty(&path, &results)?;
    outputs.insert(0, rel(exp, &path));
    Ok(outputs)
}
