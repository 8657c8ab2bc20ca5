//! Labeled/unlabeled index bookkeeping across query iterations.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Partition of dataset indices into a labeled pool (with the acquisition
/// weight each label was bought at) and an unlabeled pool.
///
/// Seed points carry weight 1; a point queried with probability `p` carries
/// weight `1/p`, frozen at acquisition time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    labeled: Vec<(usize, f64)>,
    unlabeled: Vec<usize>,
    iteration: usize,
}

impl PoolState {
    /// Builds the iteration-0 state from seed indices and the unlabeled pool.
    pub fn new(seed_labeled: &[usize], unlabeled: Vec<usize>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &i in seed_labeled {
            if !seen.insert(i) {
                return Err(Error::invalid(format!("duplicate labeled index {i}")));
            }
        }
        for &i in &unlabeled {
            if !seen.insert(i) {
                return Err(Error::invalid(format!(
                    "index {i} is duplicated or appears in both pools"
                )));
            }
        }
        Ok(PoolState {
            labeled: seed_labeled.iter().map(|&i| (i, 1.0)).collect(),
            unlabeled,
            iteration: 0,
        })
    }

    pub fn labeled(&self) -> &[(usize, f64)] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    /// Number of unlabeled points, `n_t`.
    pub fn unlabeled_len(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn labeled_len(&self) -> usize {
        self.labeled.len()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Moves `acquired` `(index, weight)` pairs from the unlabeled to the
    /// labeled pool and advances the iteration counter.
    pub fn advance(&mut self, acquired: &[(usize, f64)]) -> Result<()> {
        let mut moving = BTreeSet::new();
        for &(i, w) in acquired {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::invalid(format!(
                    "acquisition weight for index {i} must be positive and finite, got {w}"
                )));
            }
            if !moving.insert(i) {
                return Err(Error::invalid(format!("index {i} acquired twice")));
            }
            if !self.unlabeled.contains(&i) {
                return Err(Error::invalid(format!(
                    "index {i} is not in the unlabeled pool"
                )));
            }
        }
        self.unlabeled.retain(|i| !moving.contains(i));
        self.labeled.extend_from_slice(acquired);
        self.iteration += 1;
        Ok(())
    }
}
