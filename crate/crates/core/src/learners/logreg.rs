use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::ContextVector;
use crate::error::{Error, Result};

/// Probabilities are clipped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub seed: u64,
    pub convergence_tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            l2_lambda: 1e-3,
            seed: 0,
            convergence_tolerance: 1e-7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learner.learning_rate", "must be positive"));
        }
        if self.epochs < 1 {
            return Err(Error::config("learner.epochs", "must be at least 1"));
        }
        if !(self.l2_lambda >= 0.0) || !self.l2_lambda.is_finite() {
            return Err(Error::config("learner.l2_lambda", "must be non-negative"));
        }
        if !(self.convergence_tolerance >= 0.0) {
            return Err(Error::config("learner.convergence_tolerance", "must be non-negative"));
        }
        Ok(())
    }
}

/// Binary L2-regularized logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainConfig,
    pub final_loss: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(x: &[ContextVector], y: &[bool], dim: Option<usize>) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::config(
            "training data",
            format!("{} vectors but {} labels", x.len(), y.len()),
        ));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("logistic regression needs at least one example".into()));
    }
    let dim = dim.unwrap_or_else(|| x[0].dim());
    if let Some(bad) = x.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }
    Ok(dim)
}

impl LogRegModel {
    pub fn from_parameters(weights: Vec<f64>, bias: f64, config: TrainConfig) -> Self {
        LogRegModel {
            weights,
            bias,
            config,
            final_loss: f64::NAN,
            epochs_run: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: &ContextVector) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.dim(),
            });
        }
        Ok(dot(&self.weights, x.values()) + self.bias)
    }

    /// `sigmoid(w·x + b)` clipped to `[1e-6, 1 - 1e-6]`.
    pub fn predict_proba(&self, x: &ContextVector) -> Result<f64> {
        Ok(sigmoid(self.decision(x)?).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
    }

    /// Mean log-loss plus `(l2_lambda / 2)·‖w‖²` and its analytic gradient.
    /// The bias is not regularized.
    pub fn loss_gradient(&self, x: &[ContextVector], y: &[bool]) -> Result<(f64, Gradient)> {
        check_inputs(x, y, Some(self.dim()))?;
        Ok(loss_and_gradient(&self.weights, self.bias, self.config.l2_lambda, x, y))
    }
}

pub fn predict_proba(model: &LogRegModel, x: &ContextVector) -> Result<f64> {
    model.predict_proba(x)
}

pub fn loss_gradient(model: &LogRegModel, x: &[ContextVector], y: &[bool]) -> Result<(f64, Gradient)> {
    model.loss_gradient(x, y)
}

fn loss_and_gradient(w: &[f64], b: f64, lambda: f64, x: &[ContextVector], y: &[bool]) -> (f64, Gradient) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let z = dot(w, xi.values()) + b;
        let t = if yi { 1.0 } else { 0.0 };
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        gb += r;
        for (g, v) in gw.iter_mut().zip(xi.values()) {
            *g += r * v;
        }
    }
    loss /= n;
    loss += 0.5 * lambda * dot(w, w);
    for (g, wj) in gw.iter_mut().zip(w) {
        *g = *g / n + lambda * wj;
    }
    (loss, Gradient { weights: gw, bias: gb / n })
}

/// Step size below which full-batch gradient descent cannot increase the
/// loss: `2 / L` with `L = max‖(x, 1)‖² / 4 + λ` bounding the Hessian.
pub fn stability_bound(x: &[ContextVector], l2_lambda: f64) -> f64 {
    let max_sq = x
        .iter()
        .map(|v| v.values().iter().map(|a| a * a).sum::<f64>() + 1.0)
        .fold(0.0, f64::max);
    2.0 / (0.25 * max_sq + l2_lambda)
}

fn fit(x: &[ContextVector], y: &[bool], cfg: &TrainConfig, history: Option<&mut Vec<f64>>) -> Result<LogRegModel> {
    cfg.validate()?;
    let dim = check_inputs(x, y, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1e-3..1e-3)).collect();
    let mut b = 0.0;
    let mut trace = history;
    let (mut loss, mut grad) = loss_and_gradient(&w, b, cfg.l2_lambda, x, y);
    if let Some(h) = trace.as_deref_mut() {
        h.push(loss);
    }
    let mut epochs_run = 0;
    for _ in 0..cfg.epochs {
        for (wj, g) in w.iter_mut().zip(&grad.weights) {
            *wj -= cfg.learning_rate * g;
        }
        b -= cfg.learning_rate * grad.bias;
        epochs_run += 1;
        let (next_loss, next_grad) = loss_and_gradient(&w, b, cfg.l2_lambda, x, y);
        if let Some(h) = trace.as_deref_mut() {
            h.push(next_loss);
        }
        let delta = (loss - next_loss).abs();
        loss = next_loss;
        grad = next_grad;
        if delta < cfg.convergence_tolerance {
            break;
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(LogRegModel {
        weights: w,
        bias: b,
        config: *cfg,
        final_loss: loss,
        epochs_run,
    })
}

fn has_both_classes(y: &[bool]) -> bool {
    y.iter().any(|&v| v) && y.iter().any(|&v| !v)
}

/// Full-batch gradient descent on the regularized log-loss. Both classes
/// must be present.
pub fn train_logreg(x: &[ContextVector], y: &[bool], cfg: &TrainConfig) -> Result<LogRegModel> {
    if !y.is_empty() && !has_both_classes(y) {
        return Err(Error::SingleClass {
            context: "logistic regression".into(),
        });
    }
    fit(x, y, cfg, None)
}

/// Like [`train_logreg`] but accepts single-class data.
pub fn train_logreg_allow_single_class(x: &[ContextVector], y: &[bool], cfg: &TrainConfig) -> Result<LogRegModel> {
    fit(x, y, cfg, None)
}

/// Trains and returns the loss before the first step and after every epoch.
pub fn train_logreg_traced(x: &[ContextVector], y: &[bool], cfg: &TrainConfig) -> Result<(LogRegModel, Vec<f64>)> {
    if !y.is_empty() && !has_both_classes(y) {
        return Err(Error::SingleClass {
            context: "logistic regression".into(),
        });
    }
    let mut history = Vec::new();
    let model = fit(x, y, cfg, Some(&mut history))?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cv(v: &[f64]) -> ContextVector {
        ContextVector::new(v.to_vec()).unwrap()
    }

    fn random_set(n: usize, dim: usize, seed: u64) -> (Vec<ContextVector>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<ContextVector> = (0..n)
            .map(|_| cv(&(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let y = (0..n).map(|i| i % 2 == 0 || rng.random_bool(0.3)).collect();
        (x, y)
    }

    #[test]
    fn separable_pair() {
        let x = vec![cv(&[1.0, 0.0]), cv(&[-1.0, 0.0])];
        let y = vec![true, false];
        let m = train_logreg(&x, &y, &TrainConfig::default()).unwrap();
        assert!(m.predict_proba(&x[0]).unwrap() > 0.5);
        assert!(m.predict_proba(&x[1]).unwrap() < 0.5);
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let x = vec![cv(&[1.0]), cv(&[-1.0])];
        assert!(matches!(train_logreg(&x, &[true, false], &cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn single_class_needs_opt_in() {
        let x = vec![cv(&[1.0]), cv(&[2.0])];
        assert!(matches!(
            train_logreg(&x, &[true, true], &TrainConfig::default()),
            Err(Error::SingleClass { .. })
        ));
        let m = train_logreg_allow_single_class(&x, &[true, true], &TrainConfig::default()).unwrap();
        assert!(m.predict_proba(&x[0]).unwrap() > 0.5);
    }

    #[test]
    fn training_reduces_loss() {
        let (x, y) = random_set(50, 5, 4);
        let cfg = TrainConfig::default();
        let init = LogRegModel::from_parameters(vec![0.0; 5], 0.0, cfg);
        let (before, _) = init.loss_gradient(&x, &y).unwrap();
        let m = train_logreg(&x, &y, &cfg).unwrap();
        let (after, _) = m.loss_gradient(&x, &y).unwrap();
        assert!(after <= before);
        assert!((after - m.final_loss).abs() < 1e-12);
    }

    #[test]
    fn loss_monotone_below_stability_bound() {
        let (x, y) = random_set(60, 8, 7);
        let cfg = TrainConfig {
            learning_rate: 0.9 * stability_bound(&x, 1e-3),
            epochs: 300,
            convergence_tolerance: 0.0,
            ..TrainConfig::default()
        };
        let (_, history) = train_logreg_traced(&x, &y, &cfg).unwrap();
        assert_eq!(history.len(), 301);
        for pair in history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15, "{} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LogRegModel::from_parameters(vec![0.0; 3], 0.0, TrainConfig::default());
        assert_eq!(m.predict_proba(&cv(&[4.0, -2.0, 9.0])).unwrap(), 0.5);
    }

    #[test]
    fn clipping_at_extremes() {
        let m = LogRegModel::from_parameters(vec![100.0], 0.0, TrainConfig::default());
        assert_eq!(m.predict_proba(&cv(&[10.0])).unwrap(), 1.0 - PROB_FLOOR);
        assert_eq!(m.predict_proba(&cv(&[-10.0])).unwrap(), PROB_FLOOR);
    }

    #[test]
    fn dimension_mismatch() {
        let m = LogRegModel::from_parameters(vec![0.0; 3], 0.0, TrainConfig::default());
        assert!(matches!(
            m.predict_proba(&cv(&[1.0])),
            Err(Error::DimensionMismatch { expected: 3, actual: 1 })
        ));
    }

    #[test]
    fn monotone_in_score() {
        let m = LogRegModel::from_parameters(vec![1.5, -0.5], 0.2, TrainConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let x = cv(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
                (m.decision(&x).unwrap(), m.predict_proba(&x).unwrap())
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pts.windows(2).all(|p| p[1].1 >= p[0].1));
    }

    #[test]
    fn gradient_closed_form_at_zero_weights() {
        let cfg = TrainConfig {
            l2_lambda: 0.3,
            ..TrainConfig::default()
        };
        let m = LogRegModel::from_parameters(vec![0.0, 0.0], 0.7, cfg);
        let x = cv(&[2.0, -1.0]);
        let (_, g) = m.loss_gradient(&[x], &[true]).unwrap();
        let r = sigmoid(0.7) - 1.0;
        assert!((g.weights[0] - 2.0 * r).abs() < 1e-15);
        assert!((g.weights[1] + r).abs() < 1e-15);
        assert!((g.bias - r).abs() < 1e-15);
    }

    #[test]
    fn regularizer_gradient_alone() {
        // A zero input isolates the penalty term on the weights.
        let cfg = TrainConfig {
            l2_lambda: 0.25,
            ..TrainConfig::default()
        };
        let m = LogRegModel::from_parameters(vec![2.0, -4.0], 0.0, cfg);
        let (_, g) = m.loss_gradient(&[cv(&[0.0, 0.0])], &[false]).unwrap();
        assert_eq!(g.weights, vec![0.5, -1.0]);
    }

    #[test]
    fn model_json_round_trip_is_exact() {
        let (x, y) = random_set(30, 4, 1);
        let m = train_logreg(&x, &y, &TrainConfig::default()).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: LogRegModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
