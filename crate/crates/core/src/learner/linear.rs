//! Linear predictors: closed-form least squares, gradient-descent logistic
//! regression, and a damped Newton solver for any smooth objective of the
//! scores `offset + X beta`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::boost::{BoostObjective, GradHessBatch};
use crate::data::Task;
use crate::error::{check_len, Error, Result};
use crate::loss::{bce, bce_value, scale_for, ScoreVector};

/// Coefficients with the intercept stored last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub beta: Vec<f64>,
    pub task: Task,
}

impl LinearModel {
    pub fn zeros(d: usize, task: Task) -> Self {
        LinearModel {
            beta: vec![0.0; d + 1],
            task,
        }
    }

    pub fn n_features(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn intercept(&self) -> f64 {
        self.beta[self.beta.len() - 1]
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<ScoreVector> {
        let d = self.n_features();
        if x.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.ncols(),
            });
        }
        ScoreVector::new(linear_scores(x, &self.beta), scale_for(self.task))
    }
}

fn linear_scores(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let d = x.ncols();
    (0..x.nrows())
        .map(|i| {
            let mut s = 0.0;
            for j in 0..d {
                s += x[(i, j)] * beta[j];
            }
            s + beta[d]
        })
        .collect()
}

/// `X` with a trailing column of ones.
pub fn augment(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[(i, j)] } else { 1.0 })
}

const MAX_CONDITION: f64 = 1e12;

/// Least squares with intercept via Householder QR of the augmented design.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearModel> {
    check_len(x.nrows(), y.len())?;
    let a = augment(x);
    let (n, p) = a.shape();
    if n < p {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let sv = a.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::RankDeficient { condition });
    }
    let qr = a.qr();
    let rhs = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficient { condition })?;
    Ok(LinearModel {
        beta: beta.iter().copied().collect(),
        task: Task::Regression,
    })
}

#[derive(Debug, Clone)]
pub struct LogRegFit {
    pub model: LinearModel,
    /// Infinity norm of the gradient of the averaged objective at the result.
    pub grad_norm: f64,
    pub loss: f64,
}

/// Full-batch gradient descent on `BCE(X beta, y) + l2 * |w|^2` (intercept not
/// penalized), starting at zero.
///
/// Each step moves by `step_size` times the gradient of the objective divided
/// by `n`, which has the same minimizer and keeps the step scale independent
/// of the dataset size.
pub fn logreg_fit(
    x: &DMatrix<f64>,
    y: &[f64],
    steps: usize,
    step_size: f64,
    l2: f64,
) -> Result<LogRegFit> {
    check_len(x.nrows(), y.len())?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    let (n, d) = x.shape();
    let scale = 1.0 / n as f64;
    let mut beta = vec![0.0; d + 1];
    let objective = |beta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let u = linear_scores(x, beta);
        let e = bce(&u, y)?;
        let mut value = e.value;
        let mut grad = vec![0.0; d + 1];
        for i in 0..n {
            let g = e.grad[i];
            for (j, gj) in grad.iter_mut().take(d).enumerate() {
                *gj += g * x[(i, j)];
            }
            grad[d] += g;
        }
        for j in 0..d {
            value += l2 * beta[j] * beta[j];
            grad[j] += 2.0 * l2 * beta[j];
        }
        for g in &mut grad {
            *g *= scale;
        }
        Ok((value, grad))
    };
    let (mut loss, mut grad) = objective(&beta)?;
    for step in 1..=steps {
        for (b, g) in beta.iter_mut().zip(&grad) {
            *b -= step_size * g;
        }
        (loss, grad) = objective(&beta)?;
        if !loss.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Diverged { step });
        }
    }
    Ok(LogRegFit {
        model: LinearModel {
            beta,
            task: Task::Classification,
        },
        grad_norm: inf_norm(&grad),
        loss,
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Value, gradient and curvature of an objective as a function of the score
/// vector `u`. Curvature is `diag(diag) + sum_k w_k v_k v_k^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreObjective {
    pub value: f64,
    pub grad: Vec<f64>,
    pub diag: Vec<f64>,
    pub low_rank: Vec<(f64, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonParams {
    /// Ridge on non-intercept coefficients, `l2 * |w|^2`.
    pub l2: f64,
    pub max_iter: usize,
    /// Stop when the coefficient gradient's infinity norm falls below this.
    pub tol: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            l2: 0.0,
            max_iter: 200,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonFit {
    pub beta: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub value: f64,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    obj: ScoreObjective,
}

/// Minimizes `objective(offset + X beta) + l2 |w|^2` over `beta` (intercept
/// last) with damped Newton steps and Armijo backtracking. `start` defaults
/// to zero.
pub fn newton_fit<F>(
    x: &DMatrix<f64>,
    offset: &[f64],
    objective: F,
    params: &NewtonParams,
    start: Option<&[f64]>,
) -> Result<NewtonFit>
where
    F: Fn(&[f64]) -> Result<ScoreObjective>,
{
    check_len(x.nrows(), offset.len())?;
    let a = augment(x);
    let p = a.ncols();
    let d = p - 1;
    let mut beta = match start {
        Some(s) => {
            check_len(p, s.len())?;
            DVector::from_column_slice(s)
        }
        None => DVector::zeros(p),
    };

    let eval = |beta: &DVector<f64>| -> Result<Eval> {
        let lin = &a * beta;
        let u: Vec<f64> = lin.iter().zip(offset).map(|(l, o)| l + o).collect();
        let obj = objective(&u)?;
        check_len(u.len(), obj.grad.len())?;
        let mut grad = a.tr_mul(&DVector::from_column_slice(&obj.grad));
        let mut value = obj.value;
        for j in 0..d {
            value += params.l2 * beta[j] * beta[j];
            grad[j] += 2.0 * params.l2 * beta[j];
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("newton objective".into()));
        }
        Ok(Eval { value, grad, obj })
    };

    let mut cur = eval(&beta)?;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let gnorm = cur.grad.amax();
        if gnorm <= params.tol {
            break;
        }
        iterations += 1;
        let mut hess = weighted_gram(&a, &cur.obj.diag);
        for (w, v) in &cur.obj.low_rank {
            let av = a.tr_mul(&DVector::from_column_slice(v));
            hess += (&av * av.transpose()) * *w;
        }
        for j in 0..d {
            hess[(j, j)] += 2.0 * params.l2;
        }
        let dir = solve_damped(hess, &cur.grad)?;
        let slope = cur.grad.dot(&dir);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &beta - &dir * t;
            if let Ok(next) = eval(&cand) {
                let armijo = next.value <= cur.value - 1e-4 * t * slope;
                // at the rounding floor the value stops moving but the gradient still shrinks
                let flat = next.value <= cur.value + 1e-13 * cur.value.abs().max(1.0)
                    && next.grad.amax() < gnorm;
                if armijo || flat {
                    accepted = Some((cand, next));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((b, next)) => {
                beta = b;
                cur = next;
            }
            None => break,
        }
    }
    Ok(NewtonFit {
        grad_norm: cur.grad.amax(),
        beta: beta.iter().copied().collect(),
        iterations,
        value: cur.value,
    })
}

fn weighted_gram(a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let (n, p) = a.shape();
    let mut h = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in 0..=j {
            let mut s = 0.0;
            for i in 0..n {
                s += w[i] * a[(i, j)] * a[(i, k)];
            }
            h[(j, k)] = s;
            h[(k, j)] = s;
        }
    }
    h
}

/// Cholesky solve, adding a growing ridge until the matrix is positive definite.
fn solve_damped(hess: DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-12);
    let mut mu = 0.0;
    for _ in 0..40 {
        let mut h = hess.clone();
        for j in 0..h.nrows() {
            h[(j, j)] += mu;
        }
        if let Some(chol) = h.cholesky() {
            return Ok(chol.solve(grad));
        }
        mu = if mu == 0.0 { 1e-10 * scale } else { mu * 10.0 };
    }
    Err(Error::NonFinite("newton system".into()))
}

/// Round-based fit of a linear score model driven by a [`BoostObjective`]:
/// each round takes one step `-eta * H^-1 X^T grad` from the supplied
/// gradients and (floored) hessians, then calls the objective's round hook.
///
/// This is the linear counterpart of boosting and is used when the objective
/// is not a fixed function of the scores (an adversary that keeps moving).
pub fn linear_rounds<O: BoostObjective + ?Sized>(
    x: &DMatrix<f64>,
    offset: &[f64],
    rounds: usize,
    learning_rate: f64,
    l2: f64,
    objective: &mut O,
) -> Result<Vec<f64>> {
    check_len(x.nrows(), offset.len())?;
    let a = augment(x);
    let p = a.ncols();
    let mut beta = DVector::zeros(p);
    let mut u: Vec<f64> = offset.to_vec();
    for round in 0..rounds {
        let batch = objective.grad_hess(round, &u)?;
        check_len(u.len(), batch.grad.len())?;
        let batch = GradHessBatch::new(batch.grad, batch.hess)?.floored();
        let mut grad = a.tr_mul(&DVector::from_column_slice(&batch.grad));
        let mut hess = weighted_gram(&a, &batch.hess);
        for j in 0..p - 1 {
            grad[j] += 2.0 * l2 * beta[j];
            hess[(j, j)] += 2.0 * l2;
        }
        let dir = solve_damped(hess, &grad)?;
        beta -= dir * learning_rate;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Diverged { step: round + 1 });
        }
        let lin = &a * &beta;
        for (ui, (l, o)) in u.iter_mut().zip(lin.iter().zip(offset)) {
            *ui = l + o;
        }
        objective.after_round(round, &u)?;
    }
    Ok(beta.iter().copied().collect())
}

/// Logistic regression fitted to convergence with [`newton_fit`].
pub fn logreg_newton(x: &DMatrix<f64>, y: &[f64], params: &NewtonParams) -> Result<NewtonFit> {
    check_len(x.nrows(), y.len())?;
    let zero = vec![0.0; y.len()];
    newton_fit(
        x,
        &zero,
        |u| {
            let e = bce(u, y)?;
            Ok(ScoreObjective {
                value: e.value,
                grad: e.grad,
                diag: e.hess,
                low_rank: Vec::new(),
            })
        },
        params,
        None,
    )
}

/// Training BCE of a linear model, for reporting.
pub fn linear_bce(model: &LinearModel, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    bce_value(&linear_scores(x, &model.beta), y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::mse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Normal equations solved by Gauss-Jordan elimination with partial pivoting.
    fn normal_equations_oracle(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        let (n, d) = x.shape();
        let p = d + 1;
        let col = |i: usize, j: usize| if j < d { x[(i, j)] } else { 1.0 };
        let mut m = vec![vec![0.0; p + 1]; p];
        for j in 0..p {
            for k in 0..p {
                m[j][k] = (0..n).map(|i| col(i, j) * col(i, k)).sum();
            }
            m[j][p] = (0..n).map(|i| col(i, j) * y[i]).sum();
        }
        for c in 0..p {
            let piv = (c..p)
                .max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
                .unwrap();
            m.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=p {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        (0..p).map(|j| m[j][p] / m[j][j]).collect()
    }

    #[test]
    fn ols_exact_recovery() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64 * 0.5 - 1.0);
        let y: Vec<f64> = (0..10).map(|i| 2.0 * x[(i, 0)] + 1.0).collect();
        let m = ols_fit(&x, &y).unwrap();
        assert!((m.beta[0] - 2.0).abs() < 1e-10);
        assert!((m.beta[1] - 1.0).abs() < 1e-10);
        let p = m.predict(&DMatrix::from_element(1, 1, 3.0)).unwrap();
        assert!((p.values[0] - 7.0).abs() < 1e-10);
    }

    #[test]
    fn ols_orthogonal_target_gives_zero() {
        // columns and the intercept are all orthogonal to y
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, -1.0, -1.0]);
        let y = [1.0, -1.0, 1.0, -1.0];
        let m = ols_fit(&x, &y).unwrap();
        assert!(m.beta.iter().all(|b| b.abs() < 1e-12), "{:?}", m.beta);
    }

    #[test]
    fn ols_matches_normal_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let x = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-2.0..2.0));
            let y: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
            let m = ols_fit(&x, &y).unwrap();
            let oracle = normal_equations_oracle(&x, &y);
            for (a, b) in m.beta.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            // residual orthogonality
            let a = augment(&x);
            let r = &a * DVector::from_column_slice(&m.beta) - DVector::from_column_slice(&y);
            let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(a.tr_mul(&r).amax() <= 1e-8 * ynorm);
        }
    }

    #[test]
    fn ols_rank_deficient() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { i as f64 } else { 2.0 * i as f64 });
        let y = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(ols_fit(&x, &y), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn predict_dimension_mismatch() {
        let m = LinearModel::zeros(2, Task::Regression);
        assert!(matches!(
            m.predict(&DMatrix::zeros(3, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn logreg_balanced_half_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = vec![0.5; 40];
        let fit = logreg_fit(&x, &y, 500, 0.5, 0.0).unwrap();
        assert!(fit.model.beta.iter().all(|b| b.abs() < 1e-8), "{:?}", fit.model.beta);
    }

    #[test]
    fn logreg_separable() {
        let x = DMatrix::from_row_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let fit = logreg_fit(&x, &y, 2000, 0.5, 0.01).unwrap();
        let u = fit.model.predict(&x).unwrap();
        let acc = u
            .values
            .iter()
            .zip(&y)
            .filter(|(s, y)| ((**s > 0.0) as u8 as f64) == **y)
            .count();
        assert_eq!(acc, 6);
    }

    #[test]
    fn logreg_descends_from_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(100, 4, |_, _| rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..100)
            .map(|i| ((x[(i, 0)] - 0.5 * x[(i, 2)] + rng.random_range(-1.0..1.0)) > 0.0) as u8 as f64)
            .collect();
        let at_zero = linear_bce(&LinearModel::zeros(4, Task::Classification), &x, &y).unwrap();
        let fit = logreg_fit(&x, &y, 200, 0.1, 0.0).unwrap();
        assert!(fit.loss <= at_zero);
    }

    #[test]
    fn logreg_divergence_reported() {
        let x = DMatrix::from_row_slice(2, 1, &[1e150, -1e150]);
        let err = logreg_fit(&x, &[1.0, 0.0], 5, 1e200, 0.0).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn newton_reproduces_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(80, 3, |_, _| rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..3.0)).collect();
        let zero = vec![0.0; 80];
        let fit = newton_fit(
            &x,
            &zero,
            |u| {
                let e = mse(u, &y)?;
                Ok(ScoreObjective {
                    value: e.value,
                    grad: e.grad,
                    diag: e.hess,
                    low_rank: vec![],
                })
            },
            &NewtonParams::default(),
            None,
        )
        .unwrap();
        assert!(fit.grad_norm <= 1e-10, "{}", fit.grad_norm);
        let ols = ols_fit(&x, &y).unwrap();
        for (a, b) in fit.beta.iter().zip(&ols.beta) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn logreg_newton_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(200, 3, |_, _| rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..200)
            .map(|i| rng.random_bool(crate::loss::sigmoid_scalar(x[(i, 0)] - x[(i, 1)])) as u8 as f64)
            .collect();
        let fit = logreg_newton(&x, &y, &NewtonParams::default()).unwrap();
        assert!(fit.grad_norm <= 1e-10, "{}", fit.grad_norm);
        // gradient descent heads to the same point
        let gd = logreg_fit(&x, &y, 5000, 1.0, 0.0).unwrap();
        for (a, b) in fit.beta.iter().zip(&gd.model.beta) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn one_full_round_of_squared_error_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(40, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..40).map(|i| x[(i, 0)] * 2.0 - x[(i, 2)] + 0.3 + 0.01 * i as f64).collect();
        let mut obj = |_: usize, u: &[f64]| {
            let e = mse(u, &y)?;
            GradHessBatch::new(e.grad, e.hess)
        };
        let beta = linear_rounds(&x, &[0.0; 40], 1, 1.0, 0.0, &mut obj).unwrap();
        let ols = ols_fit(&x, &y).unwrap();
        for (a, b) in beta.iter().zip(&ols.beta) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
