//! Pseudo-labels, pseudo-losses, query distributions, and the seeded sampler.
//!
//! The pseudo-label at `x` is the label the current model would suffer the
//! worst loss on, `ŷ = -sign(f(x))`; the pseudo-loss is the loss evaluated
//! there, an upper bound on the loss at the true label. Query probabilities
//! proportional to the square root of the pseudo-loss minimize the weighted
//! pseudo-loss sum `Σ_j l̂_j / p_j` over all distributions.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{LinearModel, LossKind};
use crate::pool::PoolState;

/// Sum that sheds rounding error; used when validating and normalizing
/// probability vectors.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// A query distribution over the unlabeled pool, aligned with
/// `PoolState::unlabeled`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDistribution {
    probabilities: Vec<f64>,
    smoothing_gamma: f64,
}

impl QueryDistribution {
    /// Wraps a probability vector, checking nonnegativity and normalization
    /// (sum within 1e-12 of 1).
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::invalid("distribution must have at least 1 entry"));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "probabilities must be finite and nonnegative",
            ));
        }
        let sum = kahan_sum(probabilities.iter().copied());
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "probabilities sum to {sum}, expected 1 within 1e-12"
            )));
        }
        Ok(QueryDistribution {
            probabilities,
            smoothing_gamma: 0.0,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Mixture coefficient of the uniform smoothing applied to this
    /// distribution; 0 for unsmoothed distributions.
    pub fn smoothing_gamma(&self) -> f64 {
        self.smoothing_gamma
    }
}

/// The uniform distribution over `n_t` points.
pub fn uniform_distribution(n_t: usize) -> Result<QueryDistribution> {
    if n_t == 0 {
        return Err(Error::invalid("n_t must be at least 1"));
    }
    Ok(QueryDistribution {
        probabilities: vec![1.0 / n_t as f64; n_t],
        smoothing_gamma: 0.0,
    })
}

/// The minimizer of `Σ_j l_j / p_j` over the probability simplex:
/// `p_j = √l_j / Σ_k √l_k`.
///
/// When every pseudo-loss is numerically zero the ratio degenerates to 0/0;
/// the uniform distribution is returned as the symmetric limit.
pub fn optimal_distribution(pseudo_losses: &[f64]) -> Result<QueryDistribution> {
    if pseudo_losses.is_empty() {
        return Err(Error::invalid("pseudo-loss vector must be nonempty"));
    }
    if pseudo_losses.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::invalid(
            "pseudo-losses must be finite and nonnegative",
        ));
    }
    if pseudo_losses.iter().all(|l| *l <= 1e-300) {
        return uniform_distribution(pseudo_losses.len());
    }
    let roots: Vec<f64> = pseudo_losses.iter().map(|l| l.sqrt()).collect();
    let total = kahan_sum(roots.iter().copied());
    let probabilities = roots.iter().map(|r| r / total).collect();
    Ok(QueryDistribution {
        probabilities,
        smoothing_gamma: 0.0,
    })
}

/// Mixes `dist` with the uniform distribution:
/// `p'_j = (1 - gamma)·p_j + gamma/n_t`.
///
/// Caps the importance weight `1/p'` at `n_t/gamma`, which keeps the
/// weighted retraining objective numerically sane.
pub fn smooth(dist: &QueryDistribution, gamma: f64) -> Result<QueryDistribution> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!(
            "smoothing gamma must lie in [0, 1), got {gamma}"
        )));
    }
    let n = dist.len() as f64;
    let probabilities = dist
        .probabilities
        .iter()
        .map(|p| (1.0 - gamma) * p + gamma / n)
        .collect();
    Ok(QueryDistribution {
        probabilities,
        smoothing_gamma: gamma,
    })
}

/// The label the model suffers the worst loss on at `x`:
/// `-sign(f(x))`, with `sign(0) := +1` (so `f = 0` maps to `-1`).
pub fn pseudo_label(model: &LinearModel, x: &[f64]) -> Result<i8> {
    Ok(-model.predict(x)?)
}

/// Loss of the model at `x` under the pseudo-label.
///
/// For the squared loss this equals `(1 + |f(x)|)²`.
pub fn pseudo_loss(kind: LossKind, model: &LinearModel, x: &[f64]) -> Result<f64> {
    let f = model.score(x)?;
    if !f.is_finite() {
        return Err(Error::invalid("model score is not finite"));
    }
    Ok(kind.value(pseudo_label(model, x)? as f64, f))
}

/// Pseudo-losses of `model` at the given dataset rows, in row order.
///
/// Evaluated on the data-parallel backend; output order is independent of
/// scheduling.
pub fn pseudo_losses(
    kind: LossKind,
    model: &LinearModel,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<Vec<f64>> {
    if model.dim() != dataset.d() {
        return Err(Error::invalid("model dimension does not match dataset"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= dataset.n()) {
        return Err(Error::invalid(format!("index {bad} out of range")));
    }
    let values = exec::map_indexed(indices.len(), |j| {
        let x = dataset.features(indices[j]);
        let f = model.raw_score(x);
        let y_hat = if f >= 0.0 { -1.0 } else { 1.0 };
        kind.value(y_hat, f)
    });
    Ok(values)
}

/// One retained query: a dataset index with the probability it was drawn at
/// and the corresponding importance weight `1/p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueriedPoint {
    pub index: usize,
    pub probability: f64,
    pub weight: f64,
}

/// The realized query set for one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    /// Distinct queried points, ordered by position in the unlabeled pool.
    pub queried: Vec<QueriedPoint>,
    /// Number of categorical draws performed (`m_t`).
    pub draw_count: usize,
    pub seed: u64,
}

/// Draws `m_t` independent categorical samples from `dist` over
/// `pool.unlabeled()` and deduplicates repeats.
///
/// Each retained point records the probability it was drawn at, so its
/// importance weight is exactly `1/p`. Deterministic given `seed`.
pub fn draw_queries(
    dist: &QueryDistribution,
    pool: &PoolState,
    m_t: usize,
    seed: u64,
) -> Result<QueryPlan> {
    if m_t == 0 {
        return Err(Error::invalid("m_t must be at least 1"));
    }
    let n_t = pool.unlabeled_len();
    if dist.len() != n_t {
        return Err(Error::invalid(format!(
            "distribution has {} entries but the unlabeled pool holds {n_t}",
            dist.len()
        )));
    }
    if m_t > n_t {
        return Err(Error::invalid(format!(
            "cannot request {m_t} unique points from a pool of {n_t}"
        )));
    }
    let index = WeightedIndex::new(dist.probabilities())
        .map_err(|e| Error::invalid(format!("cannot sample from distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = BTreeSet::new();
    for _ in 0..m_t {
        positions.insert(index.sample(&mut rng));
    }
    let queried = positions
        .into_iter()
        .map(|pos| {
            let p = dist.probabilities()[pos];
            QueriedPoint {
                index: pool.unlabeled()[pos],
                probability: p,
                weight: 1.0 / p,
            }
        })
        .collect();
    Ok(QueryPlan {
        queried,
        draw_count: m_t,
        seed,
    })
}
