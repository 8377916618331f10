//! Numerical checks of the adjuster's guarantees.
//!
//! Identities are checked unconditionally. Bounds are only meaningful when
//! every model is the exact optimum of its convex objective and the adjusted
//! and joint models carry the same fairness penalty value; [`convex_regime`]
//! builds that situation with linear models, Newton solves, and a bisection
//! on the adjuster's lambda.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::synthetic::{classification, regression, SyntheticSpec};
use crate::data::{Dataset, Task};
use crate::error::{check_len, Error, Result};
use crate::fairness::{fairness_grad, FairnessPenalty, PenaltyKind};
use crate::learner::{augment, Model, NewtonParams};
use crate::loss::{bce_identity_gap, bce_value, mse_value, sigmoid, task_loss};
use crate::train::{fit_adjuster, fit_baseline, fit_joint, AdjustInput, LearnerKind, TrainConfig};

/// Relative tolerance for the exact identities.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub discrepancy: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        IdentityCheck {
            lhs,
            rhs,
            discrepancy: (lhs - rhs).abs(),
        }
    }

    pub fn relative(&self) -> f64 {
        self.discrepancy / (1.0 + self.lhs.abs())
    }

    pub fn holds(&self) -> bool {
        self.relative() <= IDENTITY_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; the bound holds when this is non-negative.
    pub slack: f64,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        BoundCheck {
            lhs,
            rhs,
            slack: rhs - lhs,
        }
    }
}

fn same_len(vs: &[&[f64]]) -> Result<usize> {
    let n = vs[0].len();
    for v in vs {
        check_len(n, v.len())?;
    }
    Ok(n)
}

/// Squared-error change from adding `g` to `yhat`, computed directly and via
/// `sum g^2 + 2 sum (yhat - y) g`.
pub fn check_squared_error_identity(yhat: &[f64], g: &[f64], y: &[f64]) -> Result<IdentityCheck> {
    same_len(&[yhat, g, y])?;
    let adjusted: Vec<f64> = yhat.iter().zip(g).map(|(a, b)| a + b).collect();
    let lhs = mse_value(&adjusted, y)? - mse_value(yhat, y)?;
    let rhs: f64 = (0..y.len())
        .map(|i| g[i] * g[i] + 2.0 * (yhat[i] - y[i]) * g[i])
        .sum();
    Ok(IdentityCheck::new(lhs, rhs))
}

/// Cross-entropy identity with soft labels `sigmoid(f)`, as a check.
pub fn check_bce_identity(u: &[f64], f: &[f64], y: &[f64]) -> Result<IdentityCheck> {
    same_len(&[u, f, y])?;
    let soft = sigmoid(f);
    let lhs = bce_value(u, &soft)?;
    let gap = bce_identity_gap(u, &soft, y, f)?;
    Ok(IdentityCheck::new(lhs, lhs - gap))
}

/// `L(f + g, y) - L(h, y)` against `2 (f - y)^T (g - (h - f))` for squared error.
pub fn check_squared_error_bound(f: &[f64], h: &[f64], g: &[f64], y: &[f64]) -> Result<BoundCheck> {
    let n = same_len(&[f, h, g, y])?;
    let adjusted: Vec<f64> = f.iter().zip(g).map(|(a, b)| a + b).collect();
    let lhs = mse_value(&adjusted, y)? - mse_value(h, y)?;
    let rhs: f64 = (0..n)
        .map(|i| 2.0 * (f[i] - y[i]) * (g[i] - (h[i] - f[i])))
        .sum();
    Ok(BoundCheck::new(lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffCheck {
    pub holds: bool,
    /// `lambda (before - after) - sum g^2`
    pub margin: f64,
}

/// Whether `sum g^2 <= lambda (la_before - la_after) + 1e-6 (1 + sum g^2)`.
pub fn check_tradeoff(g: &[f64], la_before: f64, la_after: f64, lambda: f64) -> TradeoffCheck {
    let g2: f64 = g.iter().map(|v| v * v).sum();
    let budget = lambda * (la_before - la_after);
    TradeoffCheck {
        holds: g2 <= budget + 1e-6 * (1.0 + g2),
        margin: budget - g2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossEntropyBound {
    pub bound: BoundCheck,
    /// Cross-entropy identity re-checked at `u = f + g`.
    pub identity: IdentityCheck,
}

/// `BCE(f + g, y)` against `BCE(h, y) + (sigmoid(f) - y)^T (g - (h - f))`.
pub fn check_cross_entropy_bound(f: &[f64], h: &[f64], g: &[f64], y: &[f64]) -> Result<CrossEntropyBound> {
    let n = same_len(&[f, h, g, y])?;
    let adjusted: Vec<f64> = f.iter().zip(g).map(|(a, b)| a + b).collect();
    let identity = check_bce_identity(&adjusted, f, y)?;
    let s = sigmoid(f);
    let lhs = bce_value(&adjusted, y)?;
    let rhs = bce_value(h, y)?
        + (0..n)
            .map(|i| (s[i] - y[i]) * (g[i] - (h[i] - f[i])))
            .sum::<f64>();
    Ok(CrossEntropyBound {
        bound: BoundCheck::new(lhs, rhs),
        identity,
    })
}

/// Baseline, joint model and adjuster at their exact optima, with the
/// adjuster's lambda tuned so both carry the same penalty value.
#[derive(Debug, Clone)]
pub struct ConvexRegime {
    pub task: Task,
    pub f: Vec<f64>,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda_joint: f64,
    pub lambda_adjuster: f64,
    pub la_baseline: f64,
    pub la_joint: f64,
    pub la_adjusted: f64,
    /// Largest coefficient-gradient infinity norm over the three fits.
    pub grad_norm: f64,
    pub baseline: Model,
    pub joint: Model,
    pub adjuster: Model,
}

impl ConvexRegime {
    pub fn fairness_mismatch(&self) -> f64 {
        (self.la_adjusted - self.la_joint).abs()
    }
}

pub fn convex_config(task: Task, lambda: f64) -> TrainConfig {
    TrainConfig {
        learner: LearnerKind::Linear,
        penalty: PenaltyKind::OverpredictionGapSquared,
        linear: NewtonParams {
            l2: 0.0,
            max_iter: 200,
            tol: 1e-10,
        },
        ..TrainConfig::new(task)
    }
    .with_lambda(lambda)
}

fn coef_grad_norm(x: &DMatrix<f64>, grad_u: &[f64]) -> f64 {
    let a = augment(x);
    a.tr_mul(&nalgebra::DVector::from_column_slice(grad_u)).amax()
}

/// Largest coefficient-gradient entry of `L(u, targets) + lambda L_a(u)`.
fn objective_grad_norm(
    task: Task,
    x: &DMatrix<f64>,
    u: &[f64],
    targets: &[f64],
    penalty: &FairnessPenalty,
    protected: &[u8],
) -> Result<f64> {
    let mut grad = task_loss(task, u, targets)?.grad;
    if penalty.lambda != 0.0 {
        let fair = fairness_grad(penalty, u, protected)?;
        for (g, f) in grad.iter_mut().zip(&fair.grad) {
            *g += penalty.lambda * f;
        }
    }
    Ok(coef_grad_norm(x, &grad))
}

/// Builds the converged convex regime on `ds` with the squared overprediction
/// gap at weight `lambda` for the joint model.
pub fn convex_regime(ds: &Dataset, lambda: f64) -> Result<ConvexRegime> {
    let task = ds.task();
    let x = ds.features();
    let y = ds.labels().to_vec();
    let p = ds.protected();
    let cfg = convex_config(task, lambda);
    let la = FairnessPenalty::gap_squared(1.0, y.clone())?;

    let baseline = fit_baseline(ds, &cfg)?;
    let joint = fit_joint(ds, &cfg)?.model;
    let f = baseline.predict(x)?.values;
    let h = joint.predict(x)?.values;
    let la_baseline = la.value(&f, p)?;
    let la_joint = la.value(&h, p)?;

    let adjust_at = |lam: f64| -> Result<(Model, Vec<f64>, f64)> {
        let m = fit_adjuster(&baseline, AdjustInput::labeled(ds), &convex_config(task, lam))?.model;
        let g = m.predict(x)?.values;
        let u: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let v = la.value(&u, p)?;
        Ok((m, g, v))
    };

    // L_a of the adjusted model falls as its lambda grows; bisect for L_a(h).
    let target = la_joint;
    let stop = 1e-12 * (1.0 + target);
    let mut best = adjust_at(0.0)?;
    let mut lambda_adjuster = 0.0;
    if best.2 > target + stop {
        let mut lo = 0.0;
        let mut hi = lambda.max(1e-3);
        let mut at_hi = adjust_at(hi)?;
        let mut doublings = 0;
        while at_hi.2 > target {
            lo = hi;
            hi *= 2.0;
            at_hi = adjust_at(hi)?;
            doublings += 1;
            if doublings > 60 {
                return Err(Error::InvalidArgument(
                    "adjuster cannot reach the joint model's fairness level".into(),
                ));
            }
        }
        lambda_adjuster = hi;
        best = at_hi;
        for _ in 0..200 {
            if (best.2 - target).abs() <= stop || hi - lo <= 1e-15 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let at_mid = adjust_at(mid)?;
            if at_mid.2 > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if (at_mid.2 - target).abs() < (best.2 - target).abs() {
                lambda_adjuster = mid;
                best = at_mid;
            }
        }
    }
    let (adjuster, g, la_adjusted) = best;

    let u: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
    let yhat = crate::loss::ScoreVector::for_task(f.clone(), task)?.link();
    let none = FairnessPenalty::gap_squared(0.0, y.clone())?;
    let grad_norm = objective_grad_norm(task, x, &f, &y, &none, p)?
        .max(objective_grad_norm(task, x, &h, &y, &la.with_lambda(lambda)?, p)?)
        .max(objective_grad_norm(task, x, &u, &yhat, &la.with_lambda(lambda_adjuster)?, p)?);

    Ok(ConvexRegime {
        task,
        f,
        h,
        g,
        y,
        lambda_joint: lambda,
        lambda_adjuster,
        la_baseline,
        la_joint,
        la_adjusted,
        grad_norm,
        baseline,
        joint,
        adjuster,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceCheck {
    /// `max |beta_g - (beta_h - beta_f)|`
    pub coef_diff: f64,
    /// `max |(f + g)(x) - h(x)|` over the rows
    pub pred_diff: f64,
}

/// Least-squares baseline, joint model and adjuster under the squared gap
/// penalty with one shared lambda.
pub fn check_least_squares_equivalence(ds: &Dataset, lambda: f64) -> Result<EquivalenceCheck> {
    if ds.task() != Task::Regression {
        return Err(Error::InvalidArgument("equivalence check is for regression".into()));
    }
    let cfg = convex_config(Task::Regression, lambda);
    let f = fit_baseline(ds, &cfg)?;
    let h = fit_joint(ds, &cfg)?.model;
    let g = fit_adjuster(&f, AdjustInput::labeled(ds), &cfg)?.model;
    let (Model::Linear(bf), Model::Linear(bh), Model::Linear(bg)) = (&f, &h, &g) else {
        unreachable!("linear learner yields linear models")
    };
    let coef_diff = (0..bf.beta.len())
        .map(|j| (bg.beta[j] - (bh.beta[j] - bf.beta[j])).abs())
        .fold(0.0, f64::max);
    let x = ds.features();
    let adjusted = crate::train::predict_adjusted(&f, &g, x)?.values;
    let joint = h.predict(x)?.values;
    let pred_diff = adjusted
        .iter()
        .zip(&joint)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(EquivalenceCheck {
        coef_diff,
        pred_diff,
    })
}

/// One line of the verification table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryRow {
    pub check: String,
    pub instances: usize,
    /// Worst observed value of `statistic`.
    pub worst: f64,
    pub statistic: String,
    pub threshold: f64,
    pub pass: bool,
    /// Hard checks fail the run; the rest are diagnostics.
    pub hard: bool,
}

fn random_triple(rng: &mut ChaCha8Rng, n: usize, binary: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let a = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let b = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y = (0..n)
        .map(|_| {
            if binary {
                rng.random_bool(0.5) as u8 as f64
            } else {
                rng.random_range(-3.0..3.0)
            }
        })
        .collect();
    (a, b, y)
}

/// Worst relative discrepancy of both identities over `instances` random draws.
pub fn identity_suite(instances: usize, n: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut w1, mut w2) = (0.0f64, 0.0f64);
    for _ in 0..instances {
        let (f, g, y) = random_triple(&mut rng, n, false);
        w1 = w1.max(check_squared_error_identity(&f, &g, &y)?.relative());
        let (u, f, y) = random_triple(&mut rng, n, true);
        w2 = w2.max(check_bce_identity(&u, &f, &y)?.relative());
    }
    Ok((w1, w2))
}

/// Slack and fairness-mismatch summary over converged convex instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeSummary {
    pub instances: usize,
    pub min_slack: f64,
    pub max_fairness_mismatch: f64,
    pub max_grad_norm: f64,
    /// Smallest tradeoff margin (regression only; NaN otherwise).
    pub min_tradeoff_margin: f64,
    pub tradeoff_holds: bool,
}

/// Synthetic instance `i` of the bound suites.
pub fn regime_instance(task: Task, i: usize, seed: u64) -> Result<Dataset> {
    let mut spec = SyntheticSpec::new(200 + 25 * (i % 5), 3 + i % 3, seed.wrapping_add(i as u64));
    spec.outcome_shift = -0.5 - 0.1 * (i % 4) as f64;
    match task {
        Task::Regression => regression(&spec),
        Task::Classification => classification(&spec),
    }
}

/// Runs `instances` converged regimes and collects the bound slacks
/// (squared-error bound for regression, cross-entropy bound for classification).
pub fn bound_suite(task: Task, instances: usize, seed: u64) -> Result<RegimeSummary> {
    let mut s = RegimeSummary {
        instances,
        min_slack: f64::INFINITY,
        max_fairness_mismatch: 0.0,
        max_grad_norm: 0.0,
        min_tradeoff_margin: if task == Task::Regression { f64::INFINITY } else { f64::NAN },
        tradeoff_holds: true,
    };
    for i in 0..instances {
        let ds = regime_instance(task, i, seed)?;
        let lambda = [0.5, 2.0, 10.0, 40.0][i % 4];
        let r = convex_regime(&ds, lambda)?;
        let slack = match task {
            Task::Regression => check_squared_error_bound(&r.f, &r.h, &r.g, &r.y)?.slack,
            Task::Classification => check_cross_entropy_bound(&r.f, &r.h, &r.g, &r.y)?.bound.slack,
        };
        s.min_slack = s.min_slack.min(slack);
        s.max_fairness_mismatch = s.max_fairness_mismatch.max(r.fairness_mismatch());
        s.max_grad_norm = s.max_grad_norm.max(r.grad_norm);
        if task == Task::Regression {
            let t = check_tradeoff(&r.g, r.la_baseline, r.la_adjusted, r.lambda_adjuster);
            s.min_tradeoff_margin = s.min_tradeoff_margin.min(t.margin);
            s.tradeoff_holds &= t.holds;
        }
    }
    Ok(s)
}

/// Regression adjuster at fixed lambdas (no fairness matching), for the
/// tradeoff inequality alone.
pub fn tradeoff_suite(instances: usize, seed: u64) -> Result<(f64, bool)> {
    let mut worst = f64::INFINITY;
    let mut all = true;
    for i in 0..instances {
        let ds = regime_instance(Task::Regression, i, seed)?;
        let lambda = [1.0, 0.3, 3.0, 20.0][i % 4];
        let cfg = convex_config(Task::Regression, lambda);
        let f = fit_baseline(&ds, &cfg)?;
        let g = fit_adjuster(&f, AdjustInput::labeled(&ds), &cfg)?.model;
        let x = ds.features();
        let fs = f.predict(x)?.values;
        let gs = g.predict(x)?.values;
        let u: Vec<f64> = fs.iter().zip(&gs).map(|(a, b)| a + b).collect();
        let la = FairnessPenalty::gap_squared(1.0, ds.labels().to_vec())?;
        let t = check_tradeoff(&gs, la.value(&fs, ds.protected())?, la.value(&u, ds.protected())?, lambda);
        worst = worst.min(t.margin);
        all &= t.holds;
    }
    Ok((worst, all))
}

/// Everything `verify-theory` prints.
pub fn run_all(seed: u64) -> Result<Vec<TheoryRow>> {
    let mut rows = Vec::new();
    let (w1, w2) = identity_suite(1000, 100, seed)?;
    rows.push(TheoryRow {
        check: "squared-error change identity".into(),
        instances: 1000,
        worst: w1,
        statistic: "relative discrepancy".into(),
        threshold: IDENTITY_TOL,
        pass: w1 <= IDENTITY_TOL,
        hard: true,
    });
    rows.push(TheoryRow {
        check: "cross-entropy pseudo-label identity".into(),
        instances: 1000,
        worst: w2,
        statistic: "relative discrepancy".into(),
        threshold: IDENTITY_TOL,
        pass: w2 <= IDENTITY_TOL,
        hard: true,
    });

    let eq_ds = regression(&SyntheticSpec::new(500, 5, seed))?;
    let eq = check_least_squares_equivalence(&eq_ds, 10.0)?;
    rows.push(TheoryRow {
        check: "least-squares adjuster = joint - baseline (coefficients)".into(),
        instances: 1,
        worst: eq.coef_diff,
        statistic: "max abs difference".into(),
        threshold: 1e-6,
        pass: eq.coef_diff <= 1e-6,
        hard: true,
    });
    rows.push(TheoryRow {
        check: "least-squares adjuster = joint - baseline (predictions)".into(),
        instances: 1,
        worst: eq.pred_diff,
        statistic: "max abs difference".into(),
        threshold: 1e-5,
        pass: eq.pred_diff <= 1e-5,
        hard: true,
    });

    let reg = bound_suite(Task::Regression, 20, seed)?;
    rows.push(TheoryRow {
        check: "squared-error bound (converged, equal fairness)".into(),
        instances: reg.instances,
        worst: reg.min_slack,
        statistic: "min slack".into(),
        threshold: -1e-4,
        pass: reg.min_slack >= -1e-4,
        hard: false,
    });
    let clf = bound_suite(Task::Classification, 20, seed)?;
    rows.push(TheoryRow {
        check: "cross-entropy bound (converged, equal fairness)".into(),
        instances: clf.instances,
        worst: clf.min_slack,
        statistic: "min slack".into(),
        threshold: -1e-4,
        pass: clf.min_slack >= -1e-4,
        hard: false,
    });
    let fair = reg.max_fairness_mismatch.max(clf.max_fairness_mismatch);
    rows.push(TheoryRow {
        check: "fairness matching for the bounds".into(),
        instances: 40,
        worst: fair,
        statistic: "max |L_a(f+g) - L_a(h)|".into(),
        threshold: 1e-6,
        pass: fair <= 1e-6,
        hard: false,
    });
    let (margin, holds) = tradeoff_suite(20, seed)?;
    rows.push(TheoryRow {
        check: "adjustment size vs penalty decrease".into(),
        instances: 20,
        worst: margin,
        statistic: "min margin".into(),
        threshold: 0.0,
        pass: holds,
        hard: false,
    });
    Ok(rows)
}

pub fn format_rows(rows: &[TheoryRow]) -> String {
    let w = rows.iter().map(|r| r.check.len()).max().unwrap_or(5).max(5);
    let mut out = format!(
        "{:<w$}  {:>6}  {:<26} {:>12}  {:>10}  {}\n",
        "check", "n", "statistic", "worst", "threshold", "result"
    );
    for r in rows {
        let verdict = match (r.pass, r.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SLACK",
        };
        out += &format!(
            "{:<w$}  {:>6}  {:<26} {:>12.3e}  {:>10.1e}  {}\n",
            r.check, r.instances, r.statistic, r.worst, r.threshold, verdict
        );
    }
    out
}
