//! K-fold cross-validation: fold one dataset into per-fold manifests, run
//! the full pipeline once per fold in its own workdir, and aggregate the
//! per-fold accuracies into means and spreads.

use std::collections::BTreeMap;
use std::fs;

use serde::{Deserialize, Serialize};

use asc_core::numerics::Rng;

use crate::config::{DatasetConfig, Experiment};
use crate::manifest::{DatasetManifest, SegmentEntry, Split};
use crate::runner::run_all;
use crate::stages::evaluate::{results_path, ResultsFile};
use crate::stages::{read_json, write_json_pretty};
use crate::PipelineError;

// Sub-streams under the kfold seed: 1 keys the per-class shuffles, 2 the
// per-fold run seeds. Frozen; changing them breaks replay.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_RUN: u64 = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KfoldSummary {
    pub config_hash: String,
    pub folds: usize,
    pub models: Vec<ModelSummary>,
    pub fusion: Vec<FusionSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: String,
    pub flavor: String,
    pub sample_mean: f64,
    pub sample_std: f64,
    pub sample_per_fold: Vec<f64>,
    pub voting_mean: f64,
    pub voting_std: f64,
    pub voting_per_fold: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionSummary {
    pub pair: String,
    pub feature_source: String,
    pub mean: f64,
    pub std: f64,
    pub per_fold: Vec<f64>,
}

/// Mean and sample standard deviation (n - 1 in the denominator).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Deterministic fold index for every segment: the manifest's own folds when
/// it carries them, otherwise a seeded per-class round-robin.
pub fn assign_folds(
    manifest: &DatasetManifest,
    folds: usize,
    kfold_seed: u64,
) -> Result<Vec<usize>, PipelineError> {
    if manifest.segments.iter().all(|e| e.fold.is_some()) {
        let assigned: Vec<usize> =
            manifest.segments.iter().map(|e| e.fold.expect("checked above")).collect();
        if let Some(&bad) = assigned.iter().find(|&&f| f >= folds) {
            return Err(PipelineError::BadConfig(format!(
                "manifest assigns fold {bad} but the config asks for {folds} folds"
            )));
        }
        for f in 0..folds {
            if !assigned.contains(&f) {
                return Err(PipelineError::BadConfig(format!(
                    "manifest never assigns fold {f} though the config asks for {folds} folds"
                )));
            }
        }
        return Ok(assigned);
    }
    if manifest.segments.iter().any(|e| e.fold.is_some()) {
        return Err(PipelineError::BadManifest(
            "folds must be set on every segment or on none".into(),
        ));
    }

    let mut assigned = vec![0usize; manifest.segments.len()];
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.segments.iter().enumerate() {
        by_class.entry(e.label).or_default().push(i);
    }
    for (&class, members) in &by_class {
        let mut rng = Rng::new(Rng::mix(&[kfold_seed, STREAM_SHUFFLE, class as u64]));
        let perm = rng.permutation(members.len());
        for (pos, &p) in perm.iter().enumerate() {
            assigned[members[p]] = pos % folds;
        }
    }
    Ok(assigned)
}

fn check_coverage(
    manifest: &DatasetManifest,
    assigned: &[usize],
    folds: usize,
) -> Result<(), PipelineError> {
    for f in 0..folds {
        for (c, name) in manifest.class_names.iter().enumerate() {
            let present = manifest
                .segments
                .iter()
                .zip(assigned)
                .any(|(e, &a)| a == f && e.label == c);
            if !present {
                return Err(PipelineError::BadConfig(format!(
                    "fold {f} holds no {name} segments; use fewer folds or more segments per class"
                )));
            }
        }
    }
    Ok(())
}

pub fn run_kfold(exp: &Experiment, force: bool) -> Result<KfoldSummary, PipelineError> {
    let folds = exp.config.kfold_folds;
    if folds < 2 {
        return Err(PipelineError::BadConfig(
            "set kfold_folds to at least 2; a single fold leaves nothing held out".into(),
        ));
    }
    let manifest_path = match &exp.manifest_path {
        Some(p) => p.clone(),
        None => {
            let p = exp.workdir.join("dataset").join("manifest.json");
            if !p.exists() {
                return Err(PipelineError::MissingPrereq {
                    stage: "kfold".into(),
                    needed: "synth".into(),
                });
            }
            p
        }
    };
    let (source, source_dir) = DatasetManifest::load(&manifest_path)?;
    let assigned = assign_folds(&source, folds, exp.kfold_seed())?;
    check_coverage(&source, &assigned, folds)?;

    let base = exp.workdir.join("kfold");
    let mut fold_results: Vec<ResultsFile> = Vec::new();
    for f in 0..folds {
        let fold_dir = base.join(format!("fold{f}"));
        fs::create_dir_all(&fold_dir)?;
        let segments: Vec<SegmentEntry> = source
            .segments
            .iter()
            .zip(&assigned)
            .map(|(e, &a)| {
                let mut entry = e.clone();
                entry.wav = source.wav_path(&source_dir, e);
                entry.fold = Some(a);
                entry.split = if a == f { Split::Test } else { Split::Train };
                entry
            })
            .collect();
        let fold_manifest = DatasetManifest {
            class_names: source.class_names.clone(),
            sample_rate: source.sample_rate,
            segments,
        };
        let manifest_file = fold_dir.join("manifest.json");
        fold_manifest.save(&manifest_file)?;

        let mut config = exp.config.clone();
        config.dataset = DatasetConfig::Manifest { path: manifest_file };
        config.workdir = fold_dir.join("run");
        config.kfold_folds = 0;
        config.seed = Rng::mix(&[exp.kfold_seed(), STREAM_RUN, f as u64]);
        let sub = Experiment::from_config(config, &exp.workdir)?;
        run_all(&sub, force)?;
        fold_results.push(read_json(&results_path(&sub))?);
    }

    let first = &fold_results[0];
    let mut models = Vec::new();
    for (i, m) in first.models.iter().enumerate() {
        let sample: Vec<f64> = fold_results.iter().map(|r| r.models[i].sample_accuracy).collect();
        let voting: Vec<f64> = fold_results.iter().map(|r| r.models[i].voting_accuracy).collect();
        let (sample_mean, sample_std) = mean_std(&sample);
        let (voting_mean, voting_std) = mean_std(&voting);
        models.push(ModelSummary {
            kind: m.kind.clone(),
            flavor: m.flavor.clone(),
            sample_mean,
            sample_std,
            sample_per_fold: sample,
            voting_mean,
            voting_std,
            voting_per_fold: voting,
        });
    }
    let mut fusion = Vec::new();
    for (i, fr) in first.fusion.iter().enumerate() {
        let per_fold: Vec<f64> = fold_results.iter().map(|r| r.fusion[i].test_accuracy).collect();
        let (mean, std) = mean_std(&per_fold);
        fusion.push(FusionSummary {
            pair: fr.pair.clone(),
            feature_source: fr.feature_source.clone(),
            mean,
            std,
            per_fold,
        });
    }

    let summary = KfoldSummary { config_hash: exp.hash.clone(), folds, models, fusion };
    write_json_pretty(&base.join("summary.json"), &summary)?;

    let mut csv = String::from("system,features,metric,mean,std");
    for f in 0..folds {
        csv.push_str(&format!(",fold{f}"));
    }
    csv.push('\n');
    let mut push_row = |system: &str, features: &str, metric: &str, mean: f64, std: f64, per: &[f64]| {
        csv.push_str(&format!("{system},{features},{metric},{mean:.4},{std:.4}"));
        for v in per {
            csv.push_str(&format!(",{v:.4}"));
        }
        csv.push('\n');
    };
    for m in &summary.models {
        let system = format!("{}-{}", m.kind, m.flavor);
        push_row(&system, "", "sample_level", m.sample_mean, m.sample_std, &m.sample_per_fold);
        push_row(&system, "", "voting", m.voting_mean, m.voting_std, &m.voting_per_fold);
    }
    for fr in &summary.fusion {
        let system = format!("svm-{}", fr.pair);
        push_row(&system, &fr.feature_source, "voting", fr.mean, fr.std, &fr.per_fold);
    }
    fs::write(base.join("summary.csv"), csv)?;

    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(per_class: &[usize]) -> DatasetManifest {
        let mut segments = Vec::new();
        for (class, &count) in per_class.iter().enumerate() {
            for j in 0..count {
                let id = format!("c{class}-{j}");
                segments.push(SegmentEntry {
                    wav: format!("wav/{id}.wav").into(),
                    id,
                    label: class,
                    split: Split::Train,
                    fold: None,
                    clean_label: None,
                });
            }
        }
        DatasetManifest {
            class_names: (0..per_class.len()).map(|c| format!("scene{c}")).collect(),
            sample_rate: 22_050,
            segments,
        }
    }

    #[test]
    fn assignment_is_deterministic_and_balanced() {
        let m = manifest(&[6, 6]);
        let a = assign_folds(&m, 3, 7).unwrap();
        let b = assign_folds(&m, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, assign_folds(&m, 3, 8).unwrap());

        // round-robin over a class permutation puts 2 of each class in
        // every fold
        for f in 0..3 {
            for class in 0..2 {
                let count = m
                    .segments
                    .iter()
                    .zip(&a)
                    .filter(|(e, &x)| e.label == class && x == f)
                    .count();
                assert_eq!(count, 2);
            }
        }
        check_coverage(&m, &a, 3).unwrap();
    }

    #[test]
    fn a_sparse_class_fails_the_coverage_check() {
        let m = manifest(&[4, 1]);
        let a = assign_folds(&m, 2, 0).unwrap();
        let err = check_coverage(&m, &a, 2).unwrap_err();
        assert!(err.to_string().contains("scene1"), "{err}");
    }

    #[test]
    fn predefined_folds_are_honored_and_checked() {
        let mut m = manifest(&[2, 2]);
        for (i, e) in m.segments.iter_mut().enumerate() {
            e.fold = Some(i % 2);
        }
        assert_eq!(assign_folds(&m, 2, 9).unwrap(), vec![0, 1, 0, 1]);

        let err = assign_folds(&m, 3, 9).unwrap_err();
        assert!(err.to_string().contains("never assigns fold 2"), "{err}");

        m.segments[0].fold = Some(5);
        let err = assign_folds(&m, 2, 9).unwrap_err();
        assert!(err.to_string().contains("fold 5"), "{err}");
    }
}
