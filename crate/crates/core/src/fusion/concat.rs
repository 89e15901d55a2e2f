//! Assembly of per-patch deep features into one long vector per segment.

use std::collections::BTreeMap;

use crate::numerics::{Matrix, Rng};

use super::FusionError;

/// Deep features of every patch of a dataset split, one row per patch.
/// Rows belonging to one segment carry the same segment ordinal and label
/// and appear in patch time order.
#[derive(Debug, Clone)]
pub struct PatchFeatureSet {
    /// `n_patches x feature_len`.
    pub features: Matrix,
    /// Segment ordinal of each row.
    pub segments: Vec<usize>,
    /// Label of each row's segment.
    pub labels: Vec<usize>,
}

impl PatchFeatureSet {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_len(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.segments.len() != self.len() || self.labels.len() != self.len() {
            return Err(FusionError::BadInput(format!(
                "{} rows but {} segment ids and {} labels",
                self.len(),
                self.segments.len(),
                self.labels.len()
            )));
        }
        if self.is_empty() {
            return Err(FusionError::BadInput("no patches".into()));
        }
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        for (&seg, &label) in self.segments.iter().zip(&self.labels) {
            if *seen.entry(seg).or_insert(label) != label {
                return Err(FusionError::BadInput(format!(
                    "segment {seg} appears with two labels"
                )));
            }
        }
        Ok(())
    }

    /// Row indices of each segment, keyed by segment ordinal, in row order.
    pub fn rows_by_segment(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (row, &seg) in self.segments.iter().enumerate() {
            map.entry(seg).or_default().push(row);
        }
        map
    }

    /// Label of each segment, keyed by segment ordinal.
    pub fn segment_labels(&self) -> BTreeMap<usize, usize> {
        self.segments.iter().zip(&self.labels).map(|(&s, &y)| (s, y)).collect()
    }
}

/// One feature row per segment, rows in ascending segment-ordinal order.
#[derive(Debug, Clone)]
pub struct SegmentFeatureSet {
    /// `n_segments x feature_len`.
    pub features: Matrix,
    /// Segment ordinal of each row, strictly increasing.
    pub segments: Vec<usize>,
    pub labels: Vec<usize>,
}

impl SegmentFeatureSet {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_len(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.segments.len() != self.len() || self.labels.len() != self.len() {
            return Err(FusionError::BadInput(format!(
                "{} rows but {} segment ids and {} labels",
                self.len(),
                self.segments.len(),
                self.labels.len()
            )));
        }
        if self.is_empty() {
            return Err(FusionError::BadInput("no segments".into()));
        }
        if self.segments.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FusionError::BadInput(
                "segment ordinals must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Concatenates each segment's patch features in a random order into one
/// long row of `blocks * feature_len` values.
///
/// The order is drawn per segment from a stream keyed off `(seed, segment
/// ordinal)`, so the result is a pure function of `(set, blocks, seed)`.
/// Segments with fewer than `blocks` patches are zero-padded at the tail so
/// every row has the same layout; a segment with more than `blocks` patches
/// is an error.
pub fn concat_random(
    set: &PatchFeatureSet,
    blocks: usize,
    seed: u64,
) -> Result<SegmentFeatureSet, FusionError> {
    set.validate()?;
    if blocks == 0 {
        return Err(FusionError::BadInput("need at least one patch slot".into()));
    }
    let rows = set.rows_by_segment();
    let dim = set.feature_len();
    let mut features = Matrix::zeros(rows.len(), blocks * dim);
    let mut segments = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (out_row, (&seg, list)) in rows.iter().enumerate() {
        if list.len() > blocks {
            return Err(FusionError::BadInput(format!(
                "segment {seg} has {} patches but the layout holds {blocks}",
                list.len()
            )));
        }
        let perm = Rng::derive(seed, seg as u64).permutation(list.len());
        let out = features.row_mut(out_row);
        for (slot, &p) in perm.iter().enumerate() {
            out[slot * dim..(slot + 1) * dim].copy_from_slice(set.features.row(list[p]));
        }
        segments.push(seg);
        labels.push(set.labels[list[0]]);
    }
    Ok(SegmentFeatureSet { features, segments, labels })
}

/// Concatenates two per-segment feature sets row by row, `first`'s block
/// leading. Both sets must list the same segments with the same labels.
pub fn aggregate(
    first: &SegmentFeatureSet,
    second: &SegmentFeatureSet,
) -> Result<SegmentFeatureSet, FusionError> {
    first.validate()?;
    second.validate()?;
    if first.segments != second.segments {
        return Err(FusionError::BadInput(
            "the two feature sets do not cover the same segments".into(),
        ));
    }
    if first.labels != second.labels {
        return Err(FusionError::BadInput(
            "the two feature sets disagree on segment labels".into(),
        ));
    }
    let (d1, d2) = (first.feature_len(), second.feature_len());
    let mut features = Matrix::zeros(first.len(), d1 + d2);
    for r in 0..first.len() {
        features.row_mut(r)[..d1].copy_from_slice(first.features.row(r));
        features.row_mut(r)[d1..].copy_from_slice(second.features.row(r));
    }
    Ok(SegmentFeatureSet {
        features,
        segments: first.segments.clone(),
        labels: first.labels.clone(),
    })
}
