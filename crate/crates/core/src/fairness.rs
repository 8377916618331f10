//! Fairness penalties on model scores and the logistic adversary.
//!
//! Every penalty is written as a term `L_a(u)` that is added to the primary
//! loss with weight `lambda`. For the adversarial penalty `L_a = -L_A`, the
//! negated adversary cross-entropy, so descending the combined objective
//! pushes the scores toward making the adversary worse.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::learner::GradHessBatch;
use crate::loss::{bce_value, logit, sigmoid_scalar, LossEval};

/// Logistic model `P(protected = 1 | u) = sigmoid(a u + b)` on the scalar score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adversary {
    pub a: f64,
    pub b: f64,
    pub step_size: f64,
    pub steps_per_round: usize,
}

impl Adversary {
    pub const DEFAULT_STEP_SIZE: f64 = 0.02;
    pub const DEFAULT_STEPS: usize = 5;

    /// Zero slope, intercept at the log-odds of the protected share.
    pub fn new(protected: &[u8]) -> Result<Self> {
        let (g1, g2) = group_sizes(protected)?;
        Ok(Adversary {
            a: 0.0,
            b: logit(g1 as f64 / (g1 + g2) as f64),
            step_size: Self::DEFAULT_STEP_SIZE,
            steps_per_round: Self::DEFAULT_STEPS,
        })
    }

    pub fn with_schedule(self, step_size: f64, steps_per_round: usize) -> Self {
        Adversary {
            step_size,
            steps_per_round,
            ..self
        }
    }

    fn logits(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|&v| self.a * v + self.b).collect()
    }

    /// Summed cross-entropy `L_A` of the adversary's guesses.
    pub fn loss(&self, u: &[f64], protected: &[u8]) -> Result<f64> {
        check_len(u.len(), protected.len())?;
        bce_value(&self.logits(u), &as_f64(protected))
    }

    /// Gradient of the mean cross-entropy with respect to `(a, b)`.
    pub fn mean_gradient(&self, u: &[f64], protected: &[u8]) -> Result<(f64, f64)> {
        check_len(u.len(), protected.len())?;
        let n = u.len() as f64;
        let (mut ga, mut gb) = (0.0, 0.0);
        for (&ui, &pi) in u.iter().zip(protected) {
            let r = sigmoid_scalar(self.a * ui + self.b) - pi as f64;
            ga += r * ui;
            gb += r;
        }
        Ok((ga / n, gb / n))
    }

    /// `steps_per_round` gradient-descent steps on the mean cross-entropy.
    pub fn update(&mut self, u: &[f64], protected: &[u8]) -> Result<()> {
        for step in 0..self.steps_per_round {
            let (ga, gb) = self.mean_gradient(u, protected)?;
            let a = self.a - self.step_size * ga;
            let b = self.b - self.step_size * gb;
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Diverged { step: step + 1 });
            }
            self.a = a;
            self.b = b;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    Adversarial,
    OverpredictionGap,
    OverpredictionGapSquared,
}

impl PenaltyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyKind::Adversarial => "adversarial",
            PenaltyKind::OverpredictionGap => "overprediction_gap",
            PenaltyKind::OverpredictionGapSquared => "overprediction_gap_squared",
        }
    }

    /// The gap penalties are defined on `u - y` and need true labels.
    pub fn needs_labels(self) -> bool {
        !matches!(self, PenaltyKind::Adversarial)
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adversarial" => Ok(PenaltyKind::Adversarial),
            "overprediction_gap" | "gap" => Ok(PenaltyKind::OverpredictionGap),
            "overprediction_gap_squared" | "gap_squared" => Ok(PenaltyKind::OverpredictionGapSquared),
            other => Err(Error::InvalidArgument(format!("unknown penalty '{other}'"))),
        }
    }
}

/// `lambda * L_a` with whatever state the penalty needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessPenalty {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub adversary: Option<Adversary>,
    labels: Option<Vec<f64>>,
}

/// Value, gradient and curvature of `L_a` (without `lambda`).
///
/// Curvature is `diag(diag) + sum_k w_k v_k v_k^T`; the adversarial term is
/// reported at a fixed adversary.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub diag: Vec<f64>,
    pub low_rank: Vec<(f64, Vec<f64>)>,
}

impl FairnessPenalty {
    pub fn adversarial(lambda: f64, adversary: Adversary) -> Result<Self> {
        Self::build(PenaltyKind::Adversarial, lambda, Some(adversary), None)
    }

    pub fn gap(lambda: f64, labels: Vec<f64>) -> Result<Self> {
        Self::build(PenaltyKind::OverpredictionGap, lambda, None, Some(labels))
    }

    pub fn gap_squared(lambda: f64, labels: Vec<f64>) -> Result<Self> {
        Self::build(PenaltyKind::OverpredictionGapSquared, lambda, None, Some(labels))
    }

    /// Builds a penalty of `kind`; the adversary starts fresh from `protected`.
    pub fn for_kind(
        kind: PenaltyKind,
        lambda: f64,
        protected: &[u8],
        labels: Option<&[f64]>,
    ) -> Result<Self> {
        match kind {
            PenaltyKind::Adversarial => Self::adversarial(lambda, Adversary::new(protected)?),
            _ => {
                let y = labels.ok_or(Error::LabelsRequired(kind.as_str()))?;
                Self::build(kind, lambda, None, Some(y.to_vec()))
            }
        }
    }

    fn build(
        kind: PenaltyKind,
        lambda: f64,
        adversary: Option<Adversary>,
        labels: Option<Vec<f64>>,
    ) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        Ok(FairnessPenalty {
            kind,
            lambda,
            adversary,
            labels,
        })
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::build(self.kind, lambda, self.adversary, self.labels.clone())
    }

    /// Runs the adversary's per-round update; no-op for the gap penalties.
    pub fn update_adversary(&mut self, u: &[f64], protected: &[u8]) -> Result<()> {
        match self.adversary.as_mut() {
            Some(adv) => adv.update(u, protected),
            None => Ok(()),
        }
    }

    pub fn value(&self, u: &[f64], protected: &[u8]) -> Result<f64> {
        Ok(fairness_grad(self, u, protected)?.value)
    }
}

fn as_f64(p: &[u8]) -> Vec<f64> {
    p.iter().map(|&v| v as f64).collect()
}

fn group_sizes(protected: &[u8]) -> Result<(usize, usize)> {
    let g1 = protected.iter().filter(|&&p| p == 1).count();
    let g2 = protected.len() - g1;
    if g1 == 0 {
        return Err(Error::EmptyProtectedGroup("protected"));
    }
    if g2 == 0 {
        return Err(Error::EmptyProtectedGroup("unprotected"));
    }
    Ok((g1, g2))
}

/// Signed overprediction gap and its (constant) gradient.
fn overprediction_gap(u: &[f64], y: &[f64], protected: &[u8]) -> Result<(f64, Vec<f64>)> {
    check_len(u.len(), y.len())?;
    let (g1, g2) = group_sizes(protected)?;
    let (w1, w2) = (1.0 / g1 as f64, -1.0 / g2 as f64);
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut c = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        if protected[i] == 1 {
            s1 += u[i] - y[i];
            c.push(w1);
        } else {
            s2 += u[i] - y[i];
            c.push(w2);
        }
    }
    Ok((s1 / g1 as f64 - s2 / g2 as f64, c))
}

/// `L_a` and its derivatives with respect to the scores `u`.
pub fn fairness_grad(penalty: &FairnessPenalty, u: &[f64], protected: &[u8]) -> Result<PenaltyEval> {
    check_len(u.len(), protected.len())?;
    let n = u.len();
    match penalty.kind {
        PenaltyKind::Adversarial => {
            let adv = penalty.adversary.as_ref().ok_or(Error::MissingAdversary)?;
            group_sizes(protected)?;
            let mut grad = Vec::with_capacity(n);
            let mut diag = Vec::with_capacity(n);
            for (&ui, &pi) in u.iter().zip(protected) {
                let s = sigmoid_scalar(adv.a * ui + adv.b);
                grad.push(-(s - pi as f64) * adv.a);
                diag.push(-adv.a * adv.a * s * (1.0 - s));
            }
            Ok(PenaltyEval {
                value: -adv.loss(u, protected)?,
                grad,
                diag,
                low_rank: Vec::new(),
            })
        }
        PenaltyKind::OverpredictionGap => {
            let y = penalty.labels().ok_or(Error::LabelsRequired("overprediction_gap"))?;
            let (gap, c) = overprediction_gap(u, y, protected)?;
            Ok(PenaltyEval {
                value: gap,
                grad: c,
                diag: vec![0.0; n],
                low_rank: Vec::new(),
            })
        }
        PenaltyKind::OverpredictionGapSquared => {
            let y = penalty
                .labels()
                .ok_or(Error::LabelsRequired("overprediction_gap_squared"))?;
            let (gap, c) = overprediction_gap(u, y, protected)?;
            Ok(PenaltyEval {
                value: gap * gap,
                grad: c.iter().map(|ci| 2.0 * gap * ci).collect(),
                diag: vec![0.0; n],
                low_rank: vec![(2.0, c)],
            })
        }
    }
}

/// Newton targets for `L + lambda L_a`: gradients add, the hessian is the
/// primary one, floored.
pub fn combined_grad_hess(
    primary: &LossEval,
    penalty: &FairnessPenalty,
    u: &[f64],
    protected: &[u8],
) -> Result<GradHessBatch> {
    check_len(u.len(), primary.grad.len())?;
    let mut grad = primary.grad.clone();
    if penalty.lambda != 0.0 {
        let fair = fairness_grad(penalty, u, protected)?;
        for (g, f) in grad.iter_mut().zip(&fair.grad) {
            *g += penalty.lambda * f;
        }
    }
    Ok(GradHessBatch::new(grad, primary.hess.clone())?.floored())
}
