//! Canonical representation of a class partition.

use serde::{Deserialize, Serialize};

use super::LabelExpError;

/// Partition of classes `0..num_classes` into disjoint non-empty subsets.
/// Canonical form: members sorted within each subset, subsets ordered by
/// smallest member. Two equal partitions therefore compare equal structurally
/// regardless of how cluster ids were assigned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub num_superclasses: usize,
    pub subsets: Vec<Vec<usize>>,
    /// `class_to_super[j]` is the index into `subsets` holding class `j`.
    pub class_to_super: Vec<usize>,
}

impl Partition {
    /// Builds the canonical partition from per-class cluster assignments
    /// (values in `0..k`, every cluster non-empty).
    pub fn from_assignments(assignments: &[usize], k: usize) -> Result<Self, LabelExpError> {
        if assignments.is_empty() {
            return Err(LabelExpError::BadInput("no classes".into()));
        }
        let mut subsets: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (class, &m) in assignments.iter().enumerate() {
            if m >= k {
                return Err(LabelExpError::BadInput(format!(
                    "assignment {m} for class {class} exceeds {k} clusters"
                )));
            }
            subsets[m].push(class);
        }
        if let Some(empty) = subsets.iter().position(|s| s.is_empty()) {
            return Err(LabelExpError::BadSubsetCount {
                subsets: k,
                classes: assignments.len(),
                why: format!("cluster {empty} is empty"),
            });
        }
        // members arrive in ascending class order; order subsets by head
        subsets.sort_by_key(|s| s[0]);
        let mut class_to_super = vec![0usize; assignments.len()];
        for (m, subset) in subsets.iter().enumerate() {
            for &class in subset {
                class_to_super[class] = m;
            }
        }
        Ok(Partition { num_superclasses: k, subsets, class_to_super })
    }

    pub fn num_classes(&self) -> usize {
        self.class_to_super.len()
    }

    pub fn validate(&self, num_classes: usize) -> Result<(), LabelExpError> {
        if self.class_to_super.len() != num_classes {
            return Err(LabelExpError::BadInput(format!(
                "partition covers {} classes, expected {num_classes}",
                self.class_to_super.len()
            )));
        }
        if self.subsets.len() != self.num_superclasses {
            return Err(LabelExpError::BadInput("subset list does not match count".into()));
        }
        let rebuilt = Partition::from_assignments(&self.class_to_super, self.num_superclasses)?;
        if rebuilt != *self {
            return Err(LabelExpError::BadInput("partition is not in canonical form".into()));
        }
        Ok(())
    }
}

/// Expanded label pairs `(coarse, fine)` for a batch of fine labels.
pub fn expanded_labels(partition: &Partition, labels: &[usize]) -> Result<Vec<(usize, usize)>, LabelExpError> {
    labels
        .iter()
        .map(|&y| {
            partition
                .class_to_super
                .get(y)
                .map(|&m| (m, y))
                .ok_or_else(|| LabelExpError::BadInput(format!("label {y} outside the partition")))
        })
        .collect()
}
