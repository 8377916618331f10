//! Baseline, joint (in-training) debiasing, and the label-free adjuster.
//!
//! The adjuster `g` is an offset on the baseline's score: it is trained
//! against the baseline's own predictions `yhat` plus `lambda * L_a` of the
//! combined score `f + g`, and never reads the true labels unless the chosen
//! penalty is itself defined on them.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{check_len, Error, Result};
use crate::fairness::{
    combined_grad_hess, fairness_grad, Adversary, FairnessPenalty, PenaltyKind,
};
use crate::learner::{
    boost_fit, linear_rounds, logreg_newton, newton_fit, ols_fit, BoostObjective, BoostParams,
    GradHessBatch, LinearModel, Model, NewtonParams, ScoreObjective,
};
use crate::loss::{logit, scale_for, task_loss, ScoreVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    /// Least squares (regression) or logistic regression (classification).
    Linear,
    Boosted,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Linear => "linear",
            LearnerKind::Boosted => "boosted",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LearnerKind::Linear),
            "boosted" | "trees" => Ok(LearnerKind::Boosted),
            other => Err(Error::InvalidArgument(format!("unknown learner '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub learner: LearnerKind,
    pub boost: BoostParams,
    /// Convergence settings for linear fits of convex objectives.
    pub linear: NewtonParams,
    pub lambda: f64,
    pub penalty: PenaltyKind,
    pub adversary_step: f64,
    pub adversary_steps: usize,
    /// Recorded with results. Training itself draws no random numbers.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        TrainConfig {
            task,
            learner: LearnerKind::Boosted,
            boost: BoostParams::default(),
            linear: NewtonParams::default(),
            lambda: 0.0,
            penalty: PenaltyKind::Adversarial,
            adversary_step: Adversary::DEFAULT_STEP_SIZE,
            adversary_steps: Adversary::DEFAULT_STEPS,
            seed: 0,
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        TrainConfig { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if self.adversary_step.is_nan() || self.adversary_step <= 0.0 {
            return Err(Error::InvalidArgument("adversary step size must be positive".into()));
        }
        if self.learner == LearnerKind::Boosted {
            self.boost.validate()?;
        }
        Ok(())
    }

    fn penalty(&self, protected: &[u8], labels: Option<&[f64]>) -> Result<FairnessPenalty> {
        let mut p = FairnessPenalty::for_kind(self.penalty, self.lambda, protected, labels)?;
        if let Some(adv) = p.adversary.as_mut() {
            *adv = adv.with_schedule(self.adversary_step, self.adversary_steps);
        }
        Ok(p)
    }
}

fn check_task(cfg: &TrainConfig, ds: &Dataset) -> Result<()> {
    if cfg.task != ds.task() {
        return Err(Error::InvalidArgument(format!(
            "config task {} does not match dataset task {}",
            cfg.task,
            ds.task()
        )));
    }
    Ok(())
}

/// Initial boosting score: mean label, or its log-odds for classification.
pub fn base_score(task: Task, y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    match task {
        Task::Regression => mean,
        Task::Classification => logit(mean),
    }
}

/// Minimizes the task loss alone; `cfg.lambda` and `cfg.penalty` are ignored.
pub fn fit_baseline(train: &Dataset, cfg: &TrainConfig) -> Result<Model> {
    cfg.validate()?;
    check_task(cfg, train)?;
    let x = train.features();
    let y = train.labels();
    match cfg.learner {
        LearnerKind::Linear => {
            let model = match cfg.task {
                Task::Regression => ols_fit(x, y)?,
                Task::Classification => LinearModel {
                    beta: logreg_newton(x, y, &cfg.linear)?.beta,
                    task: cfg.task,
                },
            };
            Ok(Model::Linear(model))
        }
        LearnerKind::Boosted => {
            let task = cfg.task;
            let mut obj = |_: usize, u: &[f64]| {
                let e = task_loss(task, u, y)?;
                GradHessBatch::new(e.grad, e.hess)
            };
            let fit = boost_fit(x, task, base_score(task, y), &cfg.boost, &mut obj)?;
            Ok(Model::Boosted(fit.model))
        }
    }
}

/// Primary loss of `offset + scores` against `targets`, plus `lambda L_a` at
/// the same point; the adversary steps after every round.
struct PenalizedObjective<'a> {
    task: Task,
    offset: Option<&'a [f64]>,
    targets: &'a [f64],
    protected: &'a [u8],
    penalty: FairnessPenalty,
}

impl PenalizedObjective<'_> {
    fn total(&self, scores: &[f64]) -> Vec<f64> {
        match self.offset {
            Some(off) => scores.iter().zip(off).map(|(s, o)| s + o).collect(),
            None => scores.to_vec(),
        }
    }
}

impl BoostObjective for PenalizedObjective<'_> {
    fn grad_hess(&mut self, _round: usize, scores: &[f64]) -> Result<GradHessBatch> {
        let u = self.total(scores);
        let primary = task_loss(self.task, &u, self.targets)?;
        combined_grad_hess(&primary, &self.penalty, &u, self.protected)
    }

    fn after_round(&mut self, _round: usize, scores: &[f64]) -> Result<()> {
        let u = self.total(scores);
        self.penalty.update_adversary(&u, self.protected)
    }
}

/// `L(u, targets) + lambda L_a(u)` with its curvature, for Newton fits.
fn convex_objective(
    task: Task,
    u: &[f64],
    targets: &[f64],
    penalty: &FairnessPenalty,
    protected: &[u8],
) -> Result<ScoreObjective> {
    let primary = task_loss(task, u, targets)?;
    let mut out = ScoreObjective {
        value: primary.value,
        grad: primary.grad,
        diag: primary.hess,
        low_rank: Vec::new(),
    };
    let lambda = penalty.lambda;
    if lambda != 0.0 {
        let fair = fairness_grad(penalty, u, protected)?;
        out.value += lambda * fair.value;
        for i in 0..u.len() {
            out.grad[i] += lambda * fair.grad[i];
            out.diag[i] += lambda * fair.diag[i];
        }
        out.low_rank = fair
            .low_rank
            .into_iter()
            .map(|(w, v)| (lambda * w, v))
            .collect();
    }
    Ok(out)
}

/// Fits `offset + X beta` to `targets` under the penalty. Convex penalties
/// are solved to convergence; the adversarial one alternates damped Newton
/// steps with adversary updates for `cfg.boost.rounds` rounds.
fn fit_linear_penalized(
    x: &DMatrix<f64>,
    offset: &[f64],
    targets: &[f64],
    protected: &[u8],
    mut penalty: FairnessPenalty,
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, Option<Adversary>)> {
    match penalty.kind {
        PenaltyKind::Adversarial => {
            let mut obj = PenalizedObjective {
                task: cfg.task,
                offset: Some(offset),
                targets,
                protected,
                penalty,
            };
            let zero = vec![0.0; offset.len()];
            let beta = linear_rounds(
                x,
                &zero,
                cfg.boost.rounds,
                cfg.boost.learning_rate,
                cfg.linear.l2,
                &mut obj,
            )?;
            Ok((beta, obj.penalty.adversary))
        }
        _ => {
            let fit = newton_fit(
                x,
                offset,
                |u| convex_objective(cfg.task, u, targets, &penalty, protected),
                &cfg.linear,
                None,
            )?;
            penalty.adversary = None;
            Ok((fit.beta, None))
        }
    }
}

#[derive(Debug, Clone)]
pub struct JointFit {
    pub model: Model,
    /// Final adversary state, for the adversarial penalty.
    pub adversary: Option<Adversary>,
}

/// Minimizes `L(h(X), Y) + lambda L_a(h(X))` against the true labels.
pub fn fit_joint(train: &Dataset, cfg: &TrainConfig) -> Result<JointFit> {
    cfg.validate()?;
    check_task(cfg, train)?;
    let x = train.features();
    let y = train.labels();
    let protected = train.protected();
    let penalty = cfg.penalty(protected, Some(y))?;
    match cfg.learner {
        LearnerKind::Boosted => {
            let mut obj = PenalizedObjective {
                task: cfg.task,
                offset: None,
                targets: y,
                protected,
                penalty,
            };
            let fit = boost_fit(x, cfg.task, base_score(cfg.task, y), &cfg.boost, &mut obj)?;
            Ok(JointFit {
                model: Model::Boosted(fit.model),
                adversary: obj.penalty.adversary,
            })
        }
        LearnerKind::Linear if cfg.lambda == 0.0 => {
            // the penalty vanishes, so this is the baseline problem exactly
            let model = fit_baseline(train, cfg)?;
            let mut adversary = penalty.adversary;
            if let Some(adv) = adversary.as_mut() {
                let u = model.predict(x)?.values;
                for _ in 0..cfg.boost.rounds {
                    adv.update(&u, protected)?;
                }
            }
            Ok(JointFit { model, adversary })
        }
        LearnerKind::Linear => {
            let zero = vec![0.0; y.len()];
            let (beta, adversary) = fit_linear_penalized(x, &zero, y, protected, penalty, cfg)?;
            Ok(JointFit {
                model: Model::Linear(LinearModel {
                    beta,
                    task: cfg.task,
                }),
                adversary,
            })
        }
    }
}

/// What the adjuster may see: features, the protected attribute, and
/// optionally labels (read only by the gap penalties).
#[derive(Debug, Clone, Copy)]
pub struct AdjustInput<'a> {
    pub features: &'a DMatrix<f64>,
    pub protected: &'a [u8],
    pub labels: Option<&'a [f64]>,
}

impl<'a> AdjustInput<'a> {
    pub fn unlabeled(ds: &'a Dataset) -> Self {
        AdjustInput {
            features: ds.features(),
            protected: ds.protected(),
            labels: None,
        }
    }

    pub fn labeled(ds: &'a Dataset) -> Self {
        AdjustInput {
            labels: Some(ds.labels()),
            ..Self::unlabeled(ds)
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdjusterFit {
    pub model: Model,
    pub adversary: Option<Adversary>,
    /// `link(f(X))` on the adjustment rows.
    pub pseudo_labels: Vec<f64>,
}

/// Trains the offset `g` on `L(f + g, yhat) + lambda L_a(f + g)` with
/// `yhat = link(f(X))` and `f` held fixed.
pub fn fit_adjuster(baseline: &Model, input: AdjustInput<'_>, cfg: &TrainConfig) -> Result<AdjusterFit> {
    cfg.validate()?;
    let x = input.features;
    check_len(x.nrows(), input.protected.len())?;
    if let Some(y) = input.labels {
        check_len(x.nrows(), y.len())?;
    }
    if cfg.penalty.needs_labels() && input.labels.is_none() {
        return Err(Error::LabelsRequired(cfg.penalty.as_str()));
    }
    if baseline.task() != cfg.task {
        return Err(Error::InvalidArgument(format!(
            "baseline task {} does not match config task {}",
            baseline.task(),
            cfg.task
        )));
    }
    let f = baseline.predict(x)?;
    let yhat = f.link();
    let labels = if cfg.penalty.needs_labels() { input.labels } else { None };
    let penalty = cfg.penalty(input.protected, labels)?;
    match cfg.learner {
        LearnerKind::Boosted => {
            let mut obj = PenalizedObjective {
                task: cfg.task,
                offset: Some(&f.values),
                targets: &yhat,
                protected: input.protected,
                penalty,
            };
            let fit = boost_fit(x, cfg.task, 0.0, &cfg.boost, &mut obj)?;
            Ok(AdjusterFit {
                model: Model::Boosted(fit.model),
                adversary: obj.penalty.adversary,
                pseudo_labels: yhat,
            })
        }
        LearnerKind::Linear => {
            let (beta, adversary) =
                fit_linear_penalized(x, &f.values, &yhat, input.protected, penalty, cfg)?;
            Ok(AdjusterFit {
                model: Model::Linear(LinearModel {
                    beta,
                    task: cfg.task,
                }),
                adversary,
                pseudo_labels: yhat,
            })
        }
    }
}

/// `f(X) + g(X)` in score space.
pub fn predict_adjusted(baseline: &Model, adjuster: &Model, x: &DMatrix<f64>) -> Result<ScoreVector> {
    let f = baseline.predict(x)?;
    let g = adjuster.predict(x)?;
    let sum = f.values.iter().zip(&g.values).map(|(a, b)| a + b).collect();
    ScoreVector::new(sum, scale_for(baseline.task()))
}

#[derive(Debug, Clone)]
pub struct TrainedTriple {
    pub baseline: Model,
    pub joint: Model,
    pub adjuster: Model,
    pub lambda: f64,
    pub pseudo_labels: Vec<f64>,
}

/// Baseline, joint model and adjuster on the same training rows.
pub fn fit_all(train: &Dataset, cfg: &TrainConfig) -> Result<TrainedTriple> {
    let baseline = fit_baseline(train, cfg)?;
    let joint = fit_joint(train, cfg)?.model;
    let adj = fit_adjuster(&baseline, AdjustInput::labeled(train), cfg)?;
    Ok(TrainedTriple {
        baseline,
        joint,
        adjuster: adj.model,
        lambda: cfg.lambda,
        pseudo_labels: adj.pseudo_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{classification, regression, SyntheticSpec};

    fn small_boost(rounds: usize) -> BoostParams {
        BoostParams {
            rounds,
            ..BoostParams::default()
        }
    }

    fn clf_cfg(rounds: usize) -> TrainConfig {
        TrainConfig {
            boost: small_boost(rounds),
            ..TrainConfig::new(Task::Classification)
        }
    }

    #[test]
    fn baseline_ignores_lambda() {
        let ds = classification(&SyntheticSpec::new(150, 3, 1)).unwrap();
        let a = fit_baseline(&ds, &clf_cfg(20)).unwrap();
        let b = fit_baseline(&ds, &clf_cfg(20).with_lambda(7.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_regression_baseline_is_ols() {
        let ds = regression(&SyntheticSpec::new(100, 3, 2)).unwrap();
        let cfg = TrainConfig {
            learner: LearnerKind::Linear,
            ..TrainConfig::new(Task::Regression)
        };
        let m = fit_baseline(&ds, &cfg).unwrap();
        assert_eq!(m, Model::Linear(ols_fit(ds.features(), ds.labels()).unwrap()));
    }

    #[test]
    fn zero_lambda_joint_is_baseline() {
        let ds = classification(&SyntheticSpec::new(200, 4, 3)).unwrap();
        let cfg = clf_cfg(25);
        let base = fit_baseline(&ds, &cfg).unwrap();
        let joint = fit_joint(&ds, &cfg).unwrap();
        assert_eq!(base, joint.model);
        let lin = TrainConfig {
            learner: LearnerKind::Linear,
            ..cfg
        };
        assert_eq!(fit_baseline(&ds, &lin).unwrap(), fit_joint(&ds, &lin).unwrap().model);
    }

    #[test]
    fn zero_lambda_adjuster_is_zero() {
        let ds = classification(&SyntheticSpec::new(200, 4, 4)).unwrap();
        let cfg = clf_cfg(25);
        let base = fit_baseline(&ds, &cfg).unwrap();
        let adj = fit_adjuster(&base, AdjustInput::unlabeled(&ds), &cfg).unwrap();
        let g = adj.model.predict(ds.features()).unwrap();
        assert!(g.values.iter().all(|v| v.abs() <= 1e-3));
        let adjusted = predict_adjusted(&base, &adj.model, ds.features()).unwrap();
        assert_eq!(adjusted.values, base.predict(ds.features()).unwrap().values);
    }

    #[test]
    fn gap_penalty_needs_labels() {
        let ds = classification(&SyntheticSpec::new(50, 2, 5)).unwrap();
        let mut cfg = clf_cfg(3).with_lambda(1.0);
        cfg.penalty = PenaltyKind::OverpredictionGap;
        let base = fit_baseline(&ds, &cfg).unwrap();
        let err = fit_adjuster(&base, AdjustInput::unlabeled(&ds), &cfg).unwrap_err();
        assert!(matches!(err, Error::LabelsRequired("overprediction_gap")));
        assert!(fit_adjuster(&base, AdjustInput::labeled(&ds), &cfg).is_ok());
    }

    #[test]
    fn adjuster_never_reads_labels_for_adversarial_penalty() {
        let ds = classification(&SyntheticSpec::new(200, 3, 6)).unwrap();
        let cfg = clf_cfg(20).with_lambda(2.0);
        let base = fit_baseline(&ds, &cfg).unwrap();
        let poisoned: Vec<f64> = ds.labels().iter().map(|y| 1.0 - y).collect();
        let bad = ds.with_labels(poisoned).unwrap();
        let a = fit_adjuster(&base, AdjustInput::labeled(&ds), &cfg).unwrap();
        let b = fit_adjuster(&base, AdjustInput::labeled(&bad), &cfg).unwrap();
        let c = fit_adjuster(&base, AdjustInput::unlabeled(&ds), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.model, c.model);
    }

    #[test]
    fn ols_adjuster_equals_joint_minus_baseline() {
        let ds = regression(&SyntheticSpec::new(300, 4, 7)).unwrap();
        let cfg = TrainConfig {
            learner: LearnerKind::Linear,
            penalty: PenaltyKind::OverpredictionGapSquared,
            ..TrainConfig::new(Task::Regression)
        }
        .with_lambda(50.0);
        let f = fit_baseline(&ds, &cfg).unwrap();
        let h = fit_joint(&ds, &cfg).unwrap().model;
        let g = fit_adjuster(&f, AdjustInput::labeled(&ds), &cfg).unwrap().model;
        let (Model::Linear(f), Model::Linear(h), Model::Linear(g)) = (&f, &h, &g) else {
            panic!("linear models expected")
        };
        for j in 0..f.beta.len() {
            assert!((g.beta[j] - (h.beta[j] - f.beta[j])).abs() <= 1e-6, "coefficient {j}");
        }
        // the penalty actually moved the joint model
        assert!(f.beta.iter().zip(&h.beta).any(|(a, b)| (a - b).abs() > 1e-3));
    }

    #[test]
    fn linear_adversarial_rounds_run() {
        let ds = classification(&SyntheticSpec::new(200, 3, 8)).unwrap();
        let cfg = TrainConfig {
            learner: LearnerKind::Linear,
            boost: small_boost(30),
            ..TrainConfig::new(Task::Classification)
        }
        .with_lambda(1.0);
        let j = fit_joint(&ds, &cfg).unwrap();
        assert!(j.adversary.is_some());
        let base = fit_baseline(&ds, &cfg).unwrap();
        let g = fit_adjuster(&base, AdjustInput::unlabeled(&ds), &cfg).unwrap();
        assert!(g.model.predict(ds.features()).unwrap().values.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn task_mismatch_rejected() {
        let ds = regression(&SyntheticSpec::new(30, 2, 9)).unwrap();
        assert!(fit_baseline(&ds, &clf_cfg(2)).is_err());
        assert!(TrainConfig::new(Task::Regression).with_lambda(-1.0).validate().is_err());
    }
}
