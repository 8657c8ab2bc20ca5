//! Linear models, margin losses, and the weighted empirical-risk trainer.
//!
//! The trainer minimizes `Σ_k w_k · l(y_k, f(x_k)) + λ‖w‖²` by full-batch
//! gradient descent. Each step is taken along the gradient of the
//! weight-averaged objective, so the iterates do not depend on the overall
//! scale of the weights; the stopping test is on the gradient norm of the
//! weighted objective itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A linear scorer `f(x) = weights · x + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    /// The zero model in `d` dimensions.
    pub fn zeros(d: usize) -> Self {
        LinearModel {
            weights: vec![0.0; d],
            bias: 0.0,
        }
    }

    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        Ok(LinearModel { weights, bias })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Evaluates `weights · x + bias`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "dimension mismatch: model has d={}, point has d={}",
                self.weights.len(),
                x.len()
            )));
        }
        Ok(self.raw_score(x))
    }

    pub(crate) fn raw_score(&self, x: &[f64]) -> f64 {
        let mut s = self.bias;
        for (w, v) in self.weights.iter().zip(x) {
            s += w * v;
        }
        s
    }

    /// Predicted label `sign(f(x))`, with `sign(0) := +1`.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.score(x)? >= 0.0 { 1 } else { -1 })
    }
}

/// Margin losses for binary labels in `{-1, +1}`.
///
/// Every variant is nonnegative and non-increasing in the margin `y·f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `(y - f)²`
    Squared,
    /// `ln(1 + e^{-y·f})`
    Logistic,
    /// `max(0, 1 - y·f)`
    Hinge,
}

impl LossKind {
    pub(crate) fn value(self, y: f64, f: f64) -> f64 {
        match self {
            LossKind::Squared => {
                let r = y - f;
                r * r
            }
            LossKind::Logistic => {
                // ln(1 + e^{-m}) without overflow for large |m|.
                let m = y * f;
                if m >= 0.0 {
                    (-m).exp().ln_1p()
                } else {
                    -m + m.exp().ln_1p()
                }
            }
            LossKind::Hinge => (1.0 - y * f).max(0.0),
        }
    }

    /// Derivative of the loss with respect to the score `f`.
    ///
    /// For the hinge the flat-side subgradient 0 is used at the kink.
    pub(crate) fn dloss_df(self, y: f64, f: f64) -> f64 {
        match self {
            LossKind::Squared => -2.0 * (y - f),
            LossKind::Logistic => {
                let m = y * f;
                // -y · σ(-m), computed as -y / (1 + e^m).
                -y / (1.0 + m.exp())
            }
            LossKind::Hinge => {
                if y * f < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
        }
    }
}

fn check_label(y: f64) -> Result<()> {
    if y != 1.0 && y != -1.0 {
        return Err(Error::invalid(format!("label must be -1 or +1, got {y}")));
    }
    Ok(())
}

/// Evaluates `kind` at label `y` and score `f`.
pub fn loss(kind: LossKind, y: f64, f: f64) -> Result<f64> {
    check_label(y)?;
    if !f.is_finite() {
        return Err(Error::invalid(format!("score must be finite, got {f}")));
    }
    Ok(kind.value(y, f))
}

/// Settings for the full-batch gradient-descent trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_size: f64,
    pub l2_regularization: f64,
    /// Carried through for reproducibility records. The full-batch trainer is
    /// deterministic and draws no randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 10_000,
            gradient_tolerance: 1e-9,
            step_size: 0.1,
            l2_regularization: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::invalid("gradient_tolerance must be > 0"));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::invalid("step_size must be > 0"));
        }
        if !(self.l2_regularization >= 0.0) {
            return Err(Error::invalid("l2_regularization must be >= 0"));
        }
        Ok(())
    }
}

/// One training example with an acquisition weight.
#[derive(Debug, Clone, Copy)]
pub struct WeightedPoint<'a> {
    pub features: &'a [f64],
    pub label: f64,
    pub weight: f64,
}

/// A fitted model plus how the optimizer got there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trained {
    pub model: LinearModel,
    /// Whether the gradient-norm test was met before `max_iterations`.
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
}

fn validate_points(points: &[WeightedPoint<'_>]) -> Result<usize> {
    let Some(first) = points.first() else {
        return Err(Error::invalid("training set must contain at least 1 point"));
    };
    let d = first.features.len();
    if d == 0 {
        return Err(Error::invalid("points must have at least 1 feature"));
    }
    for (k, p) in points.iter().enumerate() {
        if p.features.len() != d {
            return Err(Error::invalid(format!(
                "point {k} has d={}, expected d={d}",
                p.features.len()
            )));
        }
        if p.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("point {k} has non-finite features")));
        }
        check_label(p.label)?;
        if !(p.weight > 0.0) || !p.weight.is_finite() {
            return Err(Error::invalid(format!(
                "point {k} has weight {}, expected a positive finite value",
                p.weight
            )));
        }
    }
    Ok(d)
}

/// Value of the weighted objective `Σ_k w_k·l(y_k, f(x_k)) + λ‖w‖²`.
pub fn weighted_objective(
    points: &[WeightedPoint<'_>],
    kind: LossKind,
    l2_regularization: f64,
    model: &LinearModel,
) -> Result<f64> {
    let d = validate_points(points)?;
    if model.dim() != d {
        return Err(Error::invalid("model dimension does not match points"));
    }
    let mut obj = 0.0;
    for p in points {
        obj += p.weight * kind.value(p.label, model.raw_score(p.features));
    }
    for w in &model.weights {
        obj += l2_regularization * w * w;
    }
    Ok(obj)
}

/// Gradient of the weighted objective with respect to `(weights, bias)`.
pub fn weighted_gradient(
    points: &[WeightedPoint<'_>],
    kind: LossKind,
    l2_regularization: f64,
    model: &LinearModel,
) -> Result<(Vec<f64>, f64)> {
    let d = validate_points(points)?;
    if model.dim() != d {
        return Err(Error::invalid("model dimension does not match points"));
    }
    let (grad_w, grad_b, _) = gradient_unchecked(points, kind, l2_regularization, model);
    Ok((grad_w, grad_b))
}

/// Returns (grad_w, grad_b, objective) in one pass.
fn gradient_unchecked(
    points: &[WeightedPoint<'_>],
    kind: LossKind,
    l2: f64,
    model: &LinearModel,
) -> (Vec<f64>, f64, f64) {
    let d = model.dim();
    let mut grad_w = vec![0.0; d];
    let mut grad_b = 0.0;
    let mut obj = 0.0;
    for p in points {
        let f = model.raw_score(p.features);
        obj += p.weight * kind.value(p.label, f);
        let g = p.weight * kind.dloss_df(p.label, f);
        for (gw, x) in grad_w.iter_mut().zip(p.features) {
            *gw += g * x;
        }
        grad_b += g;
    }
    for (gw, w) in grad_w.iter_mut().zip(&model.weights) {
        *gw += 2.0 * l2 * w;
        obj += l2 * w * w;
    }
    (grad_w, grad_b, obj)
}

fn norm(grad_w: &[f64], grad_b: f64) -> f64 {
    let mut s = grad_b * grad_b;
    for g in grad_w {
        s += g * g;
    }
    s.sqrt()
}

/// Fits a linear model to `points` by minimizing the weighted objective.
///
/// Starts from the zero model and stops when the gradient norm of the
/// weighted objective drops to `gradient_tolerance` or `max_iterations` is
/// reached; `Trained::converged` records which. Deterministic given the
/// config and the input order.
pub fn train_weighted(
    points: &[WeightedPoint<'_>],
    kind: LossKind,
    config: &TrainConfig,
) -> Result<Trained> {
    config.validate()?;
    let d = validate_points(points)?;
    let total_weight: f64 = points.iter().map(|p| p.weight).sum();
    let mut model = LinearModel::zeros(d);
    let l2 = config.l2_regularization;

    let mut iterations = 0;
    loop {
        let (grad_w, grad_b, obj) = gradient_unchecked(points, kind, l2, &model);
        if !obj.is_finite() {
            return Err(Error::Divergence {
                iteration: iterations,
            });
        }
        let gnorm = norm(&grad_w, grad_b);
        if gnorm <= config.gradient_tolerance || iterations == config.max_iterations {
            return Ok(Trained {
                model,
                converged: gnorm <= config.gradient_tolerance,
                iterations,
                gradient_norm: gnorm,
                objective: obj,
            });
        }
        // Step along the weight-averaged gradient: invariant under uniform
        // rescaling of the acquisition weights.
        let step = config.step_size / total_weight;
        for (w, g) in model.weights.iter_mut().zip(&grad_w) {
            *w -= step * g;
        }
        model.bias -= step * grad_b;
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts<'a>(data: &'a [(Vec<f64>, f64, f64)]) -> Vec<WeightedPoint<'a>> {
        data.iter()
            .map(|(x, y, w)| WeightedPoint {
                features: x,
                label: *y,
                weight: *w,
            })
            .collect()
    }

    #[test]
    fn score_zero_model() {
        let m = LinearModel::zeros(3);
        assert_eq!(m.score(&[4.0, -1.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn score_dot_product() {
        let m = LinearModel::new(vec![1.0, 2.0], 0.5).unwrap();
        assert_eq!(m.score(&[1.0, 1.0]).unwrap(), 3.5);
    }

    #[test]
    fn score_sign_flip() {
        let m = LinearModel::new(vec![-1.0], 0.0).unwrap();
        assert_eq!(m.score(&[2.0]).unwrap(), -2.0);
    }

    #[test]
    fn score_dimension_mismatch() {
        let m = LinearModel::zeros(2);
        assert!(matches!(m.score(&[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(LossKind::Squared, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(loss(LossKind::Squared, -1.0, 0.5).unwrap(), 2.25);
        assert_eq!(loss(LossKind::Hinge, 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn loss_rejects_bad_inputs() {
        assert!(loss(LossKind::Squared, 0.5, 1.0).is_err());
        assert!(loss(LossKind::Squared, 1.0, f64::NAN).is_err());
        assert!(loss(LossKind::Logistic, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn logistic_loss_is_stable_for_large_margins() {
        let l = loss(LossKind::Logistic, 1.0, 800.0).unwrap();
        assert!(l >= 0.0 && l < 1e-300);
        let l = loss(LossKind::Logistic, -1.0, 800.0).unwrap();
        assert!((l - 800.0).abs() < 1e-9);
    }

    #[test]
    fn mislabeled_side_never_loses_less() {
        // At any score f, the label on the wrong side of the margin suffers
        // at least the loss of the label on the right side. This is the
        // precondition that makes the worst-case label a valid upper bound.
        for kind in [LossKind::Squared, LossKind::Logistic, LossKind::Hinge] {
            let mut f = -6.0;
            while f <= 6.0 {
                let l_pos = loss(kind, 1.0, f).unwrap();
                let l_neg = loss(kind, -1.0, f).unwrap();
                assert!(l_pos >= 0.0 && l_neg >= 0.0);
                let (worse, better) = if f >= 0.0 {
                    (l_neg, l_pos)
                } else {
                    (l_pos, l_neg)
                };
                assert!(
                    worse >= better,
                    "{kind:?} at f={f}: wrong-side loss {worse} < right-side {better}"
                );
                f += 0.05;
            }
        }
    }

    #[test]
    fn train_fits_single_point() {
        let data = vec![(vec![1.0], 1.0, 1.0)];
        let cfg = TrainConfig {
            l2_regularization: 0.0,
            gradient_tolerance: 1e-10,
            ..TrainConfig::default()
        };
        let t = train_weighted(&pts(&data), LossKind::Squared, &cfg).unwrap();
        assert!(t.converged);
        assert!((t.model.score(&[1.0]).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn train_symmetric_points_zero_bias() {
        let data = vec![(vec![1.0], 1.0, 1.0), (vec![-1.0], -1.0, 1.0)];
        let cfg = TrainConfig {
            l2_regularization: 0.0,
            gradient_tolerance: 1e-10,
            ..TrainConfig::default()
        };
        let t = train_weighted(&pts(&data), LossKind::Squared, &cfg).unwrap();
        assert!(t.model.bias.abs() < 1e-6);
    }

    #[test]
    fn uniform_weight_scaling_preserves_argmin() {
        // 20-point separable 1-d set; same model regardless of the common
        // weight factor.
        let mut data1 = Vec::new();
        let mut data7 = Vec::new();
        for i in 0..20 {
            let x = (i as f64) / 10.0 + 0.1;
            let (x, y) = if i % 2 == 0 { (x, 1.0) } else { (-x, -1.0) };
            data1.push((vec![x], y, 1.0));
            data7.push((vec![x], y, 7.0));
        }
        let cfg = TrainConfig {
            gradient_tolerance: 1e-8,
            max_iterations: 200_000,
            l2_regularization: 0.0,
            ..TrainConfig::default()
        };
        let a = train_weighted(&pts(&data1), LossKind::Squared, &cfg).unwrap();
        let b = train_weighted(&pts(&data7), LossKind::Squared, &cfg).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.model.weights[0] - b.model.weights[0]).abs() < 1e-6);
        assert!((a.model.bias - b.model.bias).abs() < 1e-6);
    }

    #[test]
    fn train_is_bit_deterministic() {
        let data = vec![
            (vec![0.3, -1.2], 1.0, 2.0),
            (vec![-0.7, 0.4], -1.0, 0.5),
            (vec![1.5, 0.1], 1.0, 1.0),
        ];
        let cfg = TrainConfig::default();
        let a = train_weighted(&pts(&data), LossKind::Logistic, &cfg).unwrap();
        let b = train_weighted(&pts(&data), LossKind::Logistic, &cfg).unwrap();
        assert_eq!(a.model.bias.to_bits(), b.model.bias.to_bits());
        for (x, y) in a.model.weights.iter().zip(&b.model.weights) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn train_reports_divergence_with_iteration() {
        let data = vec![(vec![10.0], 1.0, 1.0), (vec![-9.0], -1.0, 1.0)];
        let cfg = TrainConfig {
            step_size: 1e12,
            l2_regularization: 0.0,
            ..TrainConfig::default()
        };
        match train_weighted(&pts(&data), LossKind::Squared, &cfg) {
            Err(Error::Divergence { iteration }) => assert!(iteration > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn train_rejects_empty_and_nonpositive_weights() {
        assert!(train_weighted(&[], LossKind::Squared, &TrainConfig::default()).is_err());
        let data = vec![(vec![1.0], 1.0, 0.0)];
        assert!(train_weighted(&pts(&data), LossKind::Squared, &TrainConfig::default()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Small deterministic instance, all three losses.
        let data = vec![
            (vec![0.2, -0.5, 1.1], 1.0, 1.3),
            (vec![-0.4, 0.9, 0.3], -1.0, 0.7),
            (vec![0.8, 0.1, -0.6], 1.0, 2.0),
            (vec![-1.0, -0.2, 0.5], -1.0, 1.0),
        ];
        let points = pts(&data);
        let model = LinearModel::new(vec![0.11, -0.37, 0.23], 0.05).unwrap();
        for kind in [LossKind::Squared, LossKind::Logistic, LossKind::Hinge] {
            let l2 = 0.01;
            let (gw, gb) = weighted_gradient(&points, kind, l2, &model).unwrap();
            let h = 1e-6;
            let mut fd = Vec::new();
            for j in 0..model.dim() {
                let mut plus = model.clone();
                plus.weights[j] += h;
                let mut minus = model.clone();
                minus.weights[j] -= h;
                let fp = weighted_objective(&points, kind, l2, &plus).unwrap();
                let fm = weighted_objective(&points, kind, l2, &minus).unwrap();
                fd.push((fp - fm) / (2.0 * h));
            }
            let mut plus = model.clone();
            plus.bias += h;
            let mut minus = model.clone();
            minus.bias -= h;
            let fdb = (weighted_objective(&points, kind, l2, &plus).unwrap()
                - weighted_objective(&points, kind, l2, &minus).unwrap())
                / (2.0 * h);
            for (a, b) in gw.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{kind:?}: {a} vs {b}");
            }
            assert!((gb - fdb).abs() <= 1e-5 * (1.0 + fdb.abs()));
        }
    }
}
