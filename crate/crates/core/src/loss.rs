//! Task losses over raw scores: squared error and binary cross-entropy on
//! logits, with per-example first and second derivatives.
//!
//! Both losses are unnormalized sums over examples; reports divide by `n`.

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{check_len, Error, Result};

/// Clamp applied to probabilities before taking logs of them directly.
pub const PROB_EPS: f64 = 1e-12;

/// Largest f64 strictly below 1.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Raw,
    Logit,
}

/// Model outputs over a dataset: raw values for regression, logits for
/// classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub scale: Scale,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>, scale: Scale) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score vector".into()));
        }
        Ok(ScoreVector { values, scale })
    }

    pub fn for_task(values: Vec<f64>, task: Task) -> Result<Self> {
        Self::new(values, scale_for(task))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Probabilities for logit scores, the values themselves for raw scores.
    pub fn link(&self) -> Vec<f64> {
        match self.scale {
            Scale::Logit => sigmoid(&self.values),
            Scale::Raw => self.values.clone(),
        }
    }
}

pub fn scale_for(task: Task) -> Scale {
    match task {
        Task::Regression => Scale::Raw,
        Task::Classification => Scale::Logit,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    /// dL/du_i
    pub grad: Vec<f64>,
    /// d2L/du_i^2
    pub hess: Vec<f64>,
}

/// Logistic function, evaluated without overflow and kept strictly inside (0, 1).
pub fn sigmoid_scalar(u: f64) -> f64 {
    let s = if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}

pub fn sigmoid(u: &[f64]) -> Vec<f64> {
    u.iter().map(|&v| sigmoid_scalar(v)).collect()
}

/// Inverse of the logistic function, with `p` clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p / (1.0 - p)).ln()
}

/// ln(1 + e^u) without overflow.
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Sum of squared errors.
pub fn mse(u: &[f64], y: &[f64]) -> Result<LossEval> {
    check_len(u.len(), y.len())?;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(u.len());
    for (&ui, &yi) in u.iter().zip(y) {
        let r = ui - yi;
        value += r * r;
        grad.push(2.0 * r);
    }
    Ok(LossEval {
        value,
        grad,
        hess: vec![2.0; u.len()],
    })
}

/// Binary cross-entropy of logits `u` against (possibly soft) labels in [0, 1].
///
/// Uses `-[y ln s + (1-y) ln(1-s)] = softplus(u) - y u`, which is exact for
/// any finite logit.
pub fn bce(u: &[f64], y: &[f64]) -> Result<LossEval> {
    check_len(u.len(), y.len())?;
    if let Some(i) = y.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument(format!(
            "bce target {} at index {i} outside [0, 1]",
            y[i]
        )));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(u.len());
    let mut hess = Vec::with_capacity(u.len());
    for (&ui, &yi) in u.iter().zip(y) {
        value += softplus(ui) - yi * ui;
        let s = sigmoid_scalar(ui);
        grad.push(s - yi);
        hess.push(s * (1.0 - s));
    }
    Ok(LossEval { value, grad, hess })
}

pub fn bce_value(u: &[f64], y: &[f64]) -> Result<f64> {
    check_len(u.len(), y.len())?;
    Ok(u.iter().zip(y).map(|(&ui, &yi)| softplus(ui) - yi * ui).sum())
}

/// Cross-entropy of explicit probabilities, clamped by [`PROB_EPS`].
pub fn bce_from_probabilities(p: &[f64], y: &[f64]) -> Result<f64> {
    check_len(p.len(), y.len())?;
    Ok(p.iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            let pi = pi.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln())
        })
        .sum())
}

pub fn mse_value(u: &[f64], y: &[f64]) -> Result<f64> {
    check_len(u.len(), y.len())?;
    Ok(u.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Primary loss for a task: squared error for regression, BCE on logits for
/// classification.
pub fn task_loss(task: Task, u: &[f64], y: &[f64]) -> Result<LossEval> {
    match task {
        Task::Regression => mse(u, y),
        Task::Classification => bce(u, y),
    }
}

pub fn task_loss_value(task: Task, u: &[f64], y: &[f64]) -> Result<f64> {
    match task {
        Task::Regression => mse_value(u, y),
        Task::Classification => bce_value(u, y),
    }
}

/// Residual of the pseudo-label cross-entropy identity
/// `BCE(u, s) = BCE(u, y) - sum_i (sigmoid(f_i) - y_i) u_i`, where `s = sigmoid(f)`.
///
/// Returns left side minus right side; zero up to rounding for any inputs.
pub fn bce_identity_gap(u: &[f64], soft: &[f64], hard: &[f64], f: &[f64]) -> Result<f64> {
    check_len(u.len(), soft.len())?;
    check_len(u.len(), hard.len())?;
    check_len(u.len(), f.len())?;
    let lhs = bce_value(u, soft)?;
    let correction: f64 = f
        .iter()
        .zip(hard)
        .zip(u)
        .map(|((&fi, &yi), &ui)| (sigmoid_scalar(fi) - yi) * ui)
        .sum();
    let rhs = bce_value(u, hard)? - correction;
    Ok(lhs - rhs)
}
