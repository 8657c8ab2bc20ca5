//! The weighted pseudo-loss sum `M_p`, the confidence constant `c_δ`, the
//! per-point estimator variance, and Monte Carlo machinery for validating the
//! importance-sampling estimator.
//!
//! The estimator under study queries point `j` with probability `p_j`
//! (indicator `Q_j`) and reweights by `1/p_j`. Its centered summands
//! `H_j = l_j·(1 - Q_j/p_j)` are zero-mean, bounded by `M_p`, and have
//! variance `l_j²·(1/p_j - 1)`, which is what a Bernstein tail bound needs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::sampling::QueryDistribution;

/// Bound quantities at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub iteration: usize,
    pub n_t: usize,
    /// Weighted pseudo-loss sum under this report's query distribution.
    pub m_p: f64,
    /// The same sum under the uniform comparator.
    pub m_q: f64,
    pub c_delta: f64,
    pub delta: f64,
    /// `c_delta · m_p / n_t`.
    pub bound_term: f64,
    pub mean_pseudo_loss: f64,
    /// Held-out stand-in for the generalization term: |held-out loss − mean
    /// pseudo-loss|, both under the same model. Reported only, never part of
    /// a pass/fail decision; absent when no holdout split is configured.
    pub holdout_loss_proxy: Option<f64>,
}

impl BoundReport {
    pub fn new(
        iteration: usize,
        pseudo_losses: &[f64],
        dist: &QueryDistribution,
        delta: f64,
        holdout_loss: Option<f64>,
    ) -> Result<Self> {
        let n_t = pseudo_losses.len();
        let m_p_value = m_p(pseudo_losses, dist)?;
        let uniform = crate::sampling::uniform_distribution(n_t)?;
        let m_q_value = m_p(pseudo_losses, &uniform)?;
        let c = c_delta(delta)?;
        let mean_pseudo_loss = pseudo_losses.iter().sum::<f64>() / n_t as f64;
        Ok(BoundReport {
            iteration,
            n_t,
            m_p: m_p_value,
            m_q: m_q_value,
            c_delta: c,
            delta,
            bound_term: c * m_p_value / n_t as f64,
            mean_pseudo_loss,
            holdout_loss_proxy: holdout_loss.map(|h| (h - mean_pseudo_loss).abs()),
        })
    }
}

/// The weighted pseudo-loss sum `Σ_j l_j / p_j`.
///
/// Zero-loss points contribute nothing even at zero probability (0/0 reads
/// as 0 here); a positive loss at zero probability is an error because its
/// importance weight is infinite.
pub fn m_p(pseudo_losses: &[f64], dist: &QueryDistribution) -> Result<f64> {
    if pseudo_losses.len() != dist.len() {
        return Err(Error::invalid(format!(
            "{} losses vs {} probabilities",
            pseudo_losses.len(),
            dist.len()
        )));
    }
    let mut total = 0.0;
    for (j, (&l, &p)) in pseudo_losses.iter().zip(dist.probabilities()).enumerate() {
        if !l.is_finite() || l < 0.0 {
            return Err(Error::invalid(format!(
                "pseudo-loss at position {j} must be finite and nonnegative, got {l}"
            )));
        }
        if l == 0.0 {
            continue;
        }
        if p == 0.0 {
            return Err(Error::InfiniteWeight { index: j, loss: l });
        }
        total += l / p;
    }
    Ok(total)
}

/// The confidence constant multiplying `M_p/n_t` in the loss bound:
/// `1 + (L/3)·(1 + √(1 + 18/L))` with `L = ln(1/δ)`.
///
/// The leading 1 covers the weighted queried-loss term; the rest is the
/// Bernstein deviation coefficient after bounding the summand variance by
/// `M_p²`. Monotone decreasing in `δ`.
pub fn c_delta(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let l = (1.0 / delta).ln();
    Ok(1.0 + (l / 3.0) * (1.0 + (1.0 + 18.0 / l).sqrt()))
}

/// The sampling-dependent term of the loss bound, `c_δ · M_p / n_t`.
pub fn bound_term(m_p: f64, n_t: usize, delta: f64) -> Result<f64> {
    if n_t == 0 {
        return Err(Error::invalid("n_t must be at least 1"));
    }
    Ok(c_delta(delta)? * m_p / n_t as f64)
}

/// Variance of one centered summand: `l²·(1/p - 1)`.
pub fn estimator_variance(loss: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("p must lie in (0, 1], got {p}")));
    }
    if !loss.is_finite() || loss < 0.0 {
        return Err(Error::invalid(format!(
            "loss must be finite and nonnegative, got {loss}"
        )));
    }
    Ok(loss * loss * (1.0 / p - 1.0))
}

/// Sum of the per-point variances, `Σ_j l_j²·(1/p_j - 1)`.
///
/// Follows the same 0/0 convention as [`m_p`].
pub fn total_estimator_variance(losses: &[f64], dist: &QueryDistribution) -> Result<f64> {
    if losses.len() != dist.len() {
        return Err(Error::invalid("losses and distribution must be aligned"));
    }
    let mut total = 0.0;
    for (j, (&l, &p)) in losses.iter().zip(dist.probabilities()).enumerate() {
        if l == 0.0 {
            continue;
        }
        if p == 0.0 {
            return Err(Error::InfiniteWeight { index: j, loss: l });
        }
        total += estimator_variance(l, p)?;
    }
    Ok(total)
}

/// Deviation level `ε(δ)` for the centered mean `(1/n_t)·Σ_j H_j`: the
/// Bernstein tail with summand bound `m_p` and total variance `variance_sum`
/// drops below `δ` beyond this value.
///
/// Solves `δ = exp(-ε²/(2S + (2/3)·M·ε))` for `ε`, scaled by `1/n_t`:
/// `ε = (M·L/3 + √((M·L)²/9 + 2·S·L)) / n_t`, `L = ln(1/δ)`.
pub fn bernstein_level(m_p: f64, variance_sum: f64, n_t: usize, delta: f64) -> Result<f64> {
    if n_t == 0 {
        return Err(Error::invalid("n_t must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if m_p < 0.0 || variance_sum < 0.0 {
        return Err(Error::invalid("m_p and variance_sum must be nonnegative"));
    }
    let l = (1.0 / delta).ln();
    let a = m_p * l / 3.0;
    let eps = a + (a * a + 2.0 * variance_sum * l).sqrt();
    Ok(eps / n_t as f64)
}

/// One realization of the query indicators and the centered summands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSample {
    /// Realized indicators `Q_j`, one per pool position.
    pub indicators: Vec<u8>,
    /// `h_values[j] = l_j·(1 - Q_j/p_j)`, with 0 at zero-loss points.
    pub h_values: Vec<f64>,
    /// Inverse-probability-weighted mean `(1/n_t)·Σ_j (Q_j/p_j)·l_j`.
    pub weighted_mean: f64,
    /// Plain mean `(1/n_t)·Σ_j l_j`.
    pub plain_mean: f64,
}

impl EstimatorSample {
    /// Draws each `Q_j ~ Bernoulli(p_j)` independently and evaluates the
    /// estimator once.
    pub fn draw<R: Rng>(losses: &[f64], dist: &QueryDistribution, rng: &mut R) -> Result<Self> {
        check_simulable(losses, dist)?;
        let n = losses.len();
        let mut indicators = vec![0u8; n];
        let mut h_values = vec![0.0; n];
        let mut weighted_sum = 0.0;
        for j in 0..n {
            let p = dist.probabilities()[j];
            let q = draw_indicator(rng, p);
            indicators[j] = q;
            let l = losses[j];
            if l > 0.0 {
                if q == 1 {
                    let ratio = l / p;
                    weighted_sum += ratio;
                    h_values[j] = l - ratio;
                } else {
                    h_values[j] = l;
                }
            }
        }
        let n_f = n as f64;
        Ok(EstimatorSample {
            indicators,
            h_values,
            weighted_mean: weighted_sum / n_f,
            plain_mean: losses.iter().sum::<f64>() / n_f,
        })
    }
}

fn draw_indicator<R: Rng>(rng: &mut R, p: f64) -> u8 {
    // gen::<f64>() lies in [0, 1), so p = 1 always queries and p = 0 never
    // does, with no edge-case drift.
    u8::from(rng.gen::<f64>() < p)
}

fn check_simulable(losses: &[f64], dist: &QueryDistribution) -> Result<()> {
    if losses.len() != dist.len() {
        return Err(Error::invalid("losses and distribution must be aligned"));
    }
    if losses.is_empty() {
        return Err(Error::invalid("losses must be nonempty"));
    }
    for (j, (&l, &p)) in losses.iter().zip(dist.probabilities()).enumerate() {
        if !l.is_finite() || l < 0.0 {
            return Err(Error::invalid(format!(
                "loss at position {j} must be finite and nonnegative"
            )));
        }
        if l > 0.0 && p == 0.0 {
            return Err(Error::InfiniteWeight { index: j, loss: l });
        }
    }
    Ok(())
}

/// Aggregates over many independent estimator realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub trials: usize,
    pub n_t: usize,
    pub plain_mean: f64,
    /// Per-trial centered means `(1/n_t)·Σ_j H_j`, in trial order.
    centered_means: Vec<f64>,
    /// Per-point sample variance of `H_j` across trials.
    per_point_variance: Vec<f64>,
    /// Per-point mean of `H_j²` across trials.
    per_point_mean_square: Vec<f64>,
    /// Largest `|H_j|` seen in any trial.
    pub max_abs_h: f64,
}

impl EstimatorSummary {
    /// |mean over trials of the weighted mean − plain mean|.
    pub fn empirical_mean_gap(&self) -> f64 {
        self.mean_centered().abs()
    }

    fn mean_centered(&self) -> f64 {
        self.centered_means.iter().sum::<f64>() / self.trials as f64
    }

    /// Sample standard deviation of the weighted mean across trials.
    pub fn weighted_mean_std(&self) -> f64 {
        if self.trials < 2 {
            return 0.0;
        }
        let mean = self.mean_centered();
        let ss: f64 = self
            .centered_means
            .iter()
            .map(|c| (c - mean) * (c - mean))
            .sum();
        (ss / (self.trials - 1) as f64).sqrt()
    }

    /// Fraction of trials in which the centered mean exceeded `epsilon`.
    pub fn tail_exceed_fraction(&self, epsilon: f64) -> f64 {
        let count = self.centered_means.iter().filter(|&&c| c > epsilon).count();
        count as f64 / self.trials as f64
    }

    pub fn per_point_variance(&self) -> &[f64] {
        &self.per_point_variance
    }

    /// Empirical `Σ_j E[H_j²]`, the quantity the proof bounds by `M_p²`.
    pub fn sum_empirical_h2(&self) -> f64 {
        self.per_point_mean_square.iter().sum()
    }

    pub fn centered_means(&self) -> &[f64] {
        &self.centered_means
    }
}

struct BlockAccum {
    centered: Vec<f64>,
    sum_h: Vec<f64>,
    sum_h2: Vec<f64>,
    max_abs_h: f64,
}

/// Runs `trials` independent realizations of the estimator and aggregates
/// them.
///
/// Trial `i` uses an RNG stream derived from `(seed, i)`, and trials are
/// processed in fixed blocks merged in block order, so the summary is
/// bit-identical across thread counts and between the parallel and
/// sequential backends.
pub fn simulate_estimator(
    losses: &[f64],
    dist: &QueryDistribution,
    trials: usize,
    seed: u64,
) -> Result<EstimatorSummary> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    check_simulable(losses, dist)?;
    let n = losses.len();
    let probabilities = dist.probabilities();

    let run_block = |b: usize| -> BlockAccum {
        let range = exec::block_range(b, trials);
        let mut acc = BlockAccum {
            centered: Vec::with_capacity(range.len()),
            sum_h: vec![0.0; n],
            sum_h2: vec![0.0; n],
            max_abs_h: 0.0,
        };
        for trial in range {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let mut sum_h_trial = 0.0;
            for j in 0..n {
                let p = probabilities[j];
                let q = draw_indicator(&mut rng, p);
                let l = losses[j];
                let h = if l > 0.0 {
                    if q == 1 {
                        l - l / p
                    } else {
                        l
                    }
                } else {
                    0.0
                };
                sum_h_trial += h;
                acc.sum_h[j] += h;
                acc.sum_h2[j] += h * h;
                acc.max_abs_h = acc.max_abs_h.max(h.abs());
            }
            acc.centered.push(sum_h_trial / n as f64);
        }
        acc
    };

    let blocks = exec::map_indexed(exec::block_count(trials), run_block);

    let mut centered = Vec::with_capacity(trials);
    let mut sum_h = vec![0.0; n];
    let mut sum_h2 = vec![0.0; n];
    let mut max_abs_h: f64 = 0.0;
    for b in blocks {
        centered.extend_from_slice(&b.centered);
        for j in 0..n {
            sum_h[j] += b.sum_h[j];
            sum_h2[j] += b.sum_h2[j];
        }
        max_abs_h = max_abs_h.max(b.max_abs_h);
    }

    let t = trials as f64;
    let per_point_variance = (0..n)
        .map(|j| {
            if trials < 2 {
                0.0
            } else {
                ((sum_h2[j] - sum_h[j] * sum_h[j] / t) / (t - 1.0)).max(0.0)
            }
        })
        .collect();
    let per_point_mean_square = sum_h2.iter().map(|s| s / t).collect();

    Ok(EstimatorSummary {
        trials,
        n_t: n,
        plain_mean: losses.iter().sum::<f64>() / n as f64,
        centered_means: centered,
        per_point_variance,
        per_point_mean_square,
        max_abs_h,
    })
}
