use std::collections::BTreeMap;
use std::fmt::Display;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::nn::seeded_rng;

const STREAM_FOLDS: u64 = 11;

/// Assignment of every item to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold id per item.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// Item indices in fold `f`, ascending.
    pub fn test_indices(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == f).collect()
    }

    /// Item indices outside fold `f`, ascending.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != f).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

fn check_k(k: usize) -> Result<(), EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFolds(k));
    }
    Ok(())
}

/// Shuffles each class's members and deals them round-robin. The deal
/// position carries over from one class to the next (classes in sorted
/// order), which keeps fold sizes within one of each other as well.
fn deal<L: Ord + Copy + Display>(members: BTreeMap<L, Vec<usize>>, n_items: usize, k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    for (class, m) in &members {
        if m.len() < k {
            return Err(EvalError::Stratification {
                class: class.to_string(),
                count: m.len(),
                k,
            });
        }
    }
    let mut rng = seeded_rng(seed, STREAM_FOLDS);
    let mut assignments = vec![usize::MAX; n_items];
    let mut next = 0usize;
    for (_, mut m) in members {
        m.shuffle(&mut rng);
        for i in m {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(assignments)
}

/// Patch-level stratified folds: per-class counts across folds differ by at
/// most one. Every class needs at least `k` members.
pub fn make_stratified_folds<L: Ord + Copy + Display>(labels: &[L], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    check_k(k)?;
    let mut members: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments: deal(members, labels.len(), k, seed)?,
    })
}

/// Folds that keep every group (source file) whole. Groups are stratified
/// by their class, so each class needs at least `k` groups.
pub fn make_grouped_folds<L: Ord + Copy + Display>(labels: &[L], groups: &[&str], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    check_k(k)?;
    assert_eq!(labels.len(), groups.len());
    let mut group_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut group_label: Vec<L> = Vec::new();
    let mut item_group = Vec::with_capacity(labels.len());
    for (&l, &g) in labels.iter().zip(groups) {
        let id = *group_ids.entry(g).or_insert_with(|| {
            group_label.push(l);
            group_label.len() - 1
        });
        if group_label[id] != l {
            return Err(EvalError::MixedGroup(g.to_string()));
        }
        item_group.push(id);
    }
    // Group ids follow first appearance; rank them by name for order independence.
    let mut members: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for &id in group_ids.values() {
        members.entry(group_label[id]).or_default().push(id);
    }
    let group_fold = deal(members, group_label.len(), k, seed)?;
    Ok(FoldPlan {
        k,
        seed,
        assignments: item_group.iter().map(|&g| group_fold[g]).collect(),
    })
}
