//! Stage: per-kind random concatenation of patch features into one row per
//! segment, variance-thresholded PCA fitted on training rows, pairwise
//! aggregation across spectrogram kinds, and a linear SVM on the fused rows.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use asc_core::dsp::SpectrogramKind;
use asc_core::fusion::{
    aggregate, concat_random, pca_fit, sample_accuracy, svm_train, PatchFeatureSet,
    SegmentFeatureSet,
};
use asc_core::numerics::{write_tensor, Tensor};

use crate::config::{pair_name, Experiment};
use crate::manifest::Split;
use crate::PipelineError;

use super::extract::{feature_paths, kinds_in_pairs, FeatureMeta};
use super::{fusion_dir, load_patch_index, read_json, rel, write_json_pretty};

/// Header of one stored per-kind projection; the matching `.pca.atns` file
/// holds the mean (rank 1) followed by the basis (rank 2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaFile {
    pub kind: String,
    /// Patch slots each segment row holds.
    pub blocks: usize,
    /// Length of a single patch feature.
    pub feature_len: usize,
    /// `blocks * feature_len`, the concatenated row length.
    pub input_len: usize,
    /// Directions kept.
    pub dim: usize,
    /// Variance share those directions cover.
    pub covered: f64,
    pub explained: Vec<f64>,
}

/// Header of one trained fusion pair; the matching `.svm.atns` file holds
/// the per-class weight rows (bias last).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairReport {
    pub config_hash: String,
    pub pair: [String; 2],
    /// Which model flavor produced the patch features.
    pub feature_source: String,
    /// Reduced dimensionality contributed by each kind, in pair order.
    pub dims: [usize; 2],
    /// `dims[0] + dims[1]`, the fused row length the SVM sees.
    pub dim: usize,
    pub num_classes: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Sweeps each one-vs-rest head ran.
    pub sweeps: Vec<usize>,
    /// Final duality gap of each head.
    pub gaps: Vec<f64>,
    pub test_predictions: Vec<SegmentPrediction>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub segment_id: String,
    pub label: usize,
    pub predicted: usize,
}

pub fn pair_report_path(exp: &Experiment, pair: [SpectrogramKind; 2]) -> PathBuf {
    fusion_dir(exp).join(format!("{}.json", pair_name(pair)))
}

fn load_features(
    exp: &Experiment,
    kind: SpectrogramKind,
    split: Split,
) -> Result<(PatchFeatureSet, FeatureMeta), PipelineError> {
    let (atns_path, json_path) = feature_paths(exp, kind, split);
    let meta: FeatureMeta = read_json(&json_path)?;
    let tensor = asc_core::numerics::read_tensor_file(&atns_path)?;
    let features = tensor.into_matrix()?;
    let set = PatchFeatureSet {
        features,
        segments: meta.segment_of.clone(),
        labels: meta.labels.clone(),
    };
    set.validate()?;
    Ok((set, meta))
}

fn write_tensors(path: &PathBuf, tensors: &[Tensor]) -> Result<(), PipelineError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for t in tensors {
        write_tensor(&mut w, t)?;
    }
    w.flush()?;
    Ok(())
}

struct Reduced {
    train: SegmentFeatureSet,
    test: SegmentFeatureSet,
    /// Segment ids by test-segment ordinal.
    test_ids: Vec<String>,
}

pub fn run(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    let pairs = exp.config.fusion_pairs();
    if pairs.is_empty() {
        return Err(PipelineError::StageFailed(
            "no fusion pairs are configured; there is nothing to fuse".into(),
        ));
    }
    let index = load_patch_index(exp)?;
    let num_classes = index.class_names.len();
    let dir = fusion_dir(exp);
    fs::create_dir_all(&dir)?;
    let min_variance = exp.config.fusion.min_variance;
    let flavor = exp.config.fusion.features_from;
    let mut outputs = Vec::new();

    let mut reduced: Vec<(SpectrogramKind, Reduced)> = Vec::new();
    for kind in kinds_in_pairs(&pairs) {
        let (train_set, _) = load_features(exp, kind, Split::Train)?;
        let (test_set, test_meta) = load_features(exp, kind, Split::Test)?;

        // The slot count is a layout property of the dataset, not a learned
        // statistic, so the maximum ranges over both splits and keeps train
        // and test rows the same shape.
        let per_segment_max = |s: &PatchFeatureSet| {
            s.rows_by_segment().values().map(|rows| rows.len()).max().unwrap_or(0)
        };
        let blocks = per_segment_max(&train_set).max(per_segment_max(&test_set));

        let o_train = concat_random(&train_set, blocks, exp.concat_seed(kind, false))?;
        let o_test = concat_random(&test_set, blocks, exp.concat_seed(kind, true))?;
        let pca = pca_fit(&o_train.features, min_variance)?;
        let g_train = SegmentFeatureSet {
            features: pca.transform(&o_train.features)?,
            segments: o_train.segments.clone(),
            labels: o_train.labels.clone(),
        };
        let g_test = SegmentFeatureSet {
            features: pca.transform(&o_test.features)?,
            segments: o_test.segments.clone(),
            labels: o_test.labels.clone(),
        };

        let feature_len = train_set.feature_len();
        let header = PcaFile {
            kind: kind.as_str().to_string(),
            blocks,
            feature_len,
            input_len: blocks * feature_len,
            dim: pca.dim(),
            covered: pca.covered,
            explained: pca.explained.clone(),
        };
        let json_path = dir.join(format!("{kind}.pca.json"));
        write_json_pretty(&json_path, &header)?;
        let atns_path = dir.join(format!("{kind}.pca.atns"));
        write_tensors(
            &atns_path,
            &[
                Tensor::f64(vec![pca.mean.len()], pca.mean.clone()),
                Tensor::f64(
                    vec![pca.basis.rows(), pca.basis.cols()],
                    pca.basis.data().to_vec(),
                ),
            ],
        )?;
        outputs.push(rel(exp, &json_path));
        outputs.push(rel(exp, &atns_path));

        reduced.push((kind, Reduced { train: g_train, test: g_test, test_ids: test_meta.segment_ids }));
    }

    let lookup = |kind: SpectrogramKind| -> &Reduced {
        &reduced.iter().find(|(k, _)| *k == kind).expect("kind was reduced above").1
    };
    for (pi, &pair) in pairs.iter().enumerate() {
        let a = lookup(pair[0]);
        let b = lookup(pair[1]);
        let train = aggregate(&a.train, &b.train)?;
        let test = aggregate(&a.test, &b.test)?;

        let svm_cfg = exp.config.fusion.svm.with_seed(exp.svm_seed(pi));
        let report = svm_train(&train.features, &train.labels, num_classes, &svm_cfg)?;
        let train_pred = report.model.predict(&train.features)?;
        let test_pred = report.model.predict(&test.features)?;

        let test_predictions = test
            .segments
            .iter()
            .zip(&test.labels)
            .zip(&test_pred)
            .map(|((&seg, &label), &predicted)| SegmentPrediction {
                segment_id: a.test_ids[seg].clone(),
                label,
                predicted,
            })
            .collect();
        let pair_file = PairReport {
            config_hash: exp.hash.clone(),
            pair: [pair[0].as_str().to_string(), pair[1].as_str().to_string()],
            feature_source: flavor.as_str().to_string(),
            dims: [a.train.feature_len(), b.train.feature_len()],
            dim: train.feature_len(),
            num_classes,
            train_accuracy: sample_accuracy(&train_pred, &train.labels),
            test_accuracy: sample_accuracy(&test_pred, &test.labels),
            sweeps: report.sweeps,
            gaps: report.gaps,
            test_predictions,
        };
        let json_path = pair_report_path(exp, pair);
        write_json_pretty(&json_path, &pair_file)?;
        let atns_path = dir.join(format!("{}.svm.atns", pair_name(pair)));
        let w = &report.model.weights;
        write_tensors(
            &atns_path,
            &[Tensor::f64(vec![w.rows(), w.cols()], w.data().to_vec())],
        )?;
        outputs.push(rel(exp, &json_path));
        outputs.push(rel(exp, &atns_path));
    }
    Ok(outputs)
}
