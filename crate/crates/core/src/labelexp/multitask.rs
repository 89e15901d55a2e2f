//! Coarse-head attachment and the joint loss for a grouped label space.

use crate::nnet::{Head, LossSpec, NetworkState, Real};
use crate::numerics::Rng;

use super::{LabelExpError, Partition};

/// How the coarse head starts out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadInit {
    /// Row `m` and its bias begin at the mean of the class-head rows and
    /// biases of the classes grouped under `m`, so the coarse logits start
    /// consistent with what the class head already learned.
    WarmStart,
    /// Fresh He-uniform rows with zero biases.
    Random { seed: u64 },
}

/// Installs a coarse head with one row per group of `partition`. The
/// partition must cover exactly the classes the network predicts.
pub fn attach_superclass_head<F: Real>(
    state: &mut NetworkState<F>,
    partition: &Partition,
    init: HeadInit,
) -> Result<(), LabelExpError> {
    partition.validate(state.head_w.rows)?;
    let rows = partition.num_superclasses;
    let cols = state.head_w.cols;
    let head = match init {
        HeadInit::WarmStart => {
            let mut weight = vec![F::zero(); rows * cols];
            let mut bias = vec![F::zero(); rows];
            for (m, subset) in partition.subsets.iter().enumerate() {
                let inv = 1.0 / subset.len() as f64;
                for t in 0..cols {
                    let sum: f64 =
                        subset.iter().map(|&j| state.head_w.weight[j * cols + t].f64()).sum();
                    weight[m * cols + t] = F::c(sum * inv);
                }
                let sum: f64 = subset.iter().map(|&j| state.head_w.bias[j].f64()).sum();
                bias[m] = F::c(sum * inv);
            }
            Head { rows, cols, weight, bias }
        }
        HeadInit::Random { seed } => {
            let mut rng = Rng::new(seed);
            let limit = (6.0 / cols as f64).sqrt();
            let weight =
                (0..rows * cols).map(|_| F::c((rng.next_f64() * 2.0 - 1.0) * limit)).collect();
            Head { rows, cols, weight, bias: vec![F::zero(); rows] }
        }
    };
    state.install_super_head(head)?;
    Ok(())
}

/// Joint loss over both heads: `gamma` blends the class and group data terms,
/// `alpha` pulls each class row toward its group row, `beta` decays both
/// heads.
pub fn multitask_spec(partition: &Partition, gamma: f64, alpha: f64, beta: f64) -> LossSpec {
    LossSpec::Multitask {
        gamma,
        alpha,
        beta,
        class_to_super: partition.class_to_super.clone(),
        global_decay: false,
    }
}
