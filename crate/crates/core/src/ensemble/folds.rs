use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Partition of a dataset into `k` parts of near-equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Example id to part index.
    pub assignments: BTreeMap<String, usize>,
    /// Dataset positions in each part, ascending.
    parts: Vec<Vec<usize>>,
}

/// One train/validation split derived from a fold plan.
#[derive(Debug, Clone)]
pub struct SplitSpec<'a> {
    pub validation_part: usize,
    pub train_parts: Vec<usize>,
    pub extra_train: Option<&'a Dataset>,
}

impl FoldPlan {
    pub fn part(&self, index: usize) -> &[usize] {
        &self.parts[index]
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        self.parts.iter().map(Vec::len).collect()
    }

    pub fn train_parts(&self, validation_part: usize) -> Vec<usize> {
        (0..self.k).filter(|&p| p != validation_part).collect()
    }

    /// Positions of every example in `train_parts`, ascending.
    pub fn positions(&self, train_parts: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = train_parts
            .iter()
            .flat_map(|&p| self.parts[p].iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn split<'a>(
        &self,
        validation_part: usize,
        extra_train: Option<&'a Dataset>,
    ) -> SplitSpec<'a> {
        assert!(validation_part < self.k);
        SplitSpec {
            validation_part,
            train_parts: self.train_parts(validation_part),
            extra_train,
        }
    }
}

/// Seeded shuffle followed by round-robin assignment.
pub fn make_fold_plan(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    build(ds, k, seed, false)
}

/// Like [`make_fold_plan`], but examples are grouped by language before the
/// round-robin deal so every part gets a near-equal share of each language.
pub fn make_stratified_fold_plan(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    build(ds, k, seed, true)
}

fn build(ds: &Dataset, k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k = {k}, need at least 2 parts")));
    }
    if ds.len() < k {
        return Err(Error::TooFewExamples { size: ds.len(), k });
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    if stratified {
        let examples = ds.examples();
        order.sort_by(|&a, &b| examples[a].language.cmp(&examples[b].language));
    }
    let mut parts = vec![Vec::with_capacity(ds.len() / k + 1); k];
    let mut assignments = BTreeMap::new();
    for (slot, &pos) in order.iter().enumerate() {
        let part = slot % k;
        parts[part].push(pos);
        assignments.insert(ds.examples()[pos].id.clone(), part);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(FoldPlan {
        k,
        seed,
        stratified,
        assignments,
        parts,
    })
}
