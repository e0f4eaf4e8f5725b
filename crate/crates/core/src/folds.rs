//! Random balanced partition of hypotheses into folds with train/cv/test roles.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::rng::{stream, streams};

/// `assignment[i]` is the fold of hypothesis `i`. For fold `j` the test set is
/// fold `j`, the validation set is fold `(j + 1) mod M` and training uses the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub m: usize,
    pub assignment: Vec<usize>,
}

/// Partitions `0..n` into `m` folds whose sizes differ by at most one.
pub fn make_folds(n: usize, m: usize, seed: u64) -> Result<FoldPlan> {
    if m < 3 {
        return Err(config(format!(
            "need at least 3 folds (disjoint train, cv and test), got {m}"
        )));
    }
    if n < m {
        return Err(config(format!("cannot split {n} hypotheses into {m} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, streams::FOLDS));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % m;
    }
    Ok(FoldPlan { n, m, assignment })
}

impl FoldPlan {
    /// Indices in fold `j`, ascending.
    pub fn fold(&self, j: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignment[i] == j).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.m];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }

    pub fn test(&self, j: usize) -> Vec<usize> {
        self.fold(j)
    }

    pub fn cv(&self, j: usize) -> Vec<usize> {
        self.fold((j + 1) % self.m)
    }

    pub fn train(&self, j: usize) -> Vec<usize> {
        let cv = (j + 1) % self.m;
        (0..self.n)
            .filter(|&i| self.assignment[i] != j && self.assignment[i] != cv)
            .collect()
    }
}
