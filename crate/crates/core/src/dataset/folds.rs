use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Subject-disjoint k-fold assignment.
///
/// Subjects are shuffled into `k` blocks of `n_test`. Fold `i` tests on block
/// `i`, validates on block `(i + 1) mod k` and trains on the rest, so every
/// subject is tested exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub k: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub folds: Vec<Fold>,
}

pub fn make_fold_plan(
    subjects: &BTreeSet<String>,
    k: usize,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<FoldPlan> {
    let n = subjects.len();
    let fail = |msg: String| Err(Error::config("evaluation.folds", msg));
    if k < 3 {
        return fail(format!("k must be at least 3 (one block each for train, val, test), got {k}"));
    }
    if n_train + n_val + n_test != n {
        return fail(format!(
            "n_train + n_val + n_test must equal the subject count: {n_train} + {n_val} + {n_test} != {n}"
        ));
    }
    if k * n_test != n {
        return fail(format!(
            "k * n_test must equal the subject count so every subject is tested once: {k} * {n_test} != {n}"
        ));
    }
    if n_val != n_test {
        return fail(format!(
            "validation uses one rotation block, so n_val must equal n_test: {n_val} != {n_test}"
        ));
    }
    if n_test == 0 {
        return fail("n_test must be positive".into());
    }

    let mut order: Vec<String> = subjects.iter().cloned().collect();
    order.shuffle(&mut rng_from(seed));
    let blocks: Vec<BTreeSet<String>> = order
        .chunks(n_test)
        .map(|c| c.iter().cloned().collect())
        .collect();

    let folds = (0..k)
        .map(|i| {
            let val_block = (i + 1) % k;
            let train = blocks
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != i && b != val_block)
                .flat_map(|(_, s)| s.iter().cloned())
                .collect();
            Fold {
                train,
                val: blocks[val_block].clone(),
                test: blocks[i].clone(),
            }
        })
        .collect();

    Ok(FoldPlan {
        seed,
        k,
        n_train,
        n_val,
        n_test,
        folds,
    })
}

impl FoldPlan {
    /// Checks disjointness within folds, coverage of `subjects`, and that each
    /// subject is tested exactly once.
    pub fn validate(&self, subjects: &BTreeSet<String>) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("fold plan: {msg}")));
        if self.folds.len() != self.k {
            return bad(format!("{} folds, expected {}", self.folds.len(), self.k));
        }
        let mut tested: Vec<&String> = Vec::new();
        for (i, f) in self.folds.iter().enumerate() {
            if !f.train.is_disjoint(&f.val)
                || !f.train.is_disjoint(&f.test)
                || !f.val.is_disjoint(&f.test)
            {
                return bad(format!("fold {i} partitions overlap"));
            }
            let union: BTreeSet<String> = f
                .train
                .iter()
                .chain(&f.val)
                .chain(&f.test)
                .cloned()
                .collect();
            if &union != subjects {
                return bad(format!("fold {i} does not cover exactly the subject set"));
            }
            tested.extend(f.test.iter());
        }
        tested.sort();
        let unique: BTreeSet<&String> = tested.iter().copied().collect();
        if tested.len() != subjects.len() || unique.len() != subjects.len() {
            return bad("subjects are not each tested exactly once".into());
        }
        Ok(())
    }
}
