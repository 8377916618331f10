//! Second-order gradient boosting over [`RegressionTree`]s with a per-round
//! gradient/hessian callback.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, FeatureIndex, RegressionTree, TreeParams};
use crate::data::Task;
use crate::error::{check_len, Error, Result};
use crate::loss::{scale_for, ScoreVector};

/// Lower bound applied to every hessian entry before a tree is grown.
pub const HESS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub rounds: usize,
    pub l2_reg: f64,
    pub min_child_weight: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            max_depth: 3,
            learning_rate: 0.1,
            rounds: 200,
            l2_reg: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl BoostParams {
    /// `n` times the rounds at `1/n` of the learning rate.
    pub fn stretched(self, n: usize) -> Self {
        BoostParams {
            rounds: self.rounds * n.max(1),
            learning_rate: self.learning_rate / n.max(1) as f64,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("rounds must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.l2_reg.is_nan() || self.l2_reg < 0.0 || self.min_child_weight.is_nan() || self.min_child_weight < 0.0 {
            return Err(Error::InvalidArgument(
                "l2_reg and min_child_weight must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn tree(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            l2_reg: self.l2_reg,
            min_child_weight: self.min_child_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradHessBatch {
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl GradHessBatch {
    pub fn new(grad: Vec<f64>, hess: Vec<f64>) -> Result<Self> {
        check_len(grad.len(), hess.len())?;
        if grad.iter().chain(&hess).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient/hessian batch".into()));
        }
        Ok(GradHessBatch { grad, hess })
    }

    pub fn floored(mut self) -> Self {
        for h in &mut self.hess {
            *h = h.max(HESS_FLOOR);
        }
        self
    }
}

/// Supplies Newton targets for each round given the current training scores.
pub trait BoostObjective {
    fn grad_hess(&mut self, round: usize, scores: &[f64]) -> Result<GradHessBatch>;

    /// Called after the round's tree has been added to `scores`.
    fn after_round(&mut self, _round: usize, _scores: &[f64]) -> Result<()> {
        Ok(())
    }
}

impl<F> BoostObjective for F
where
    F: FnMut(usize, &[f64]) -> Result<GradHessBatch>,
{
    fn grad_hess(&mut self, round: usize, scores: &[f64]) -> Result<GradHessBatch> {
        self(round, scores)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTreesModel {
    pub trees: Vec<RegressionTree>,
    pub base_score: f64,
    pub n_features: usize,
    pub task: Task,
    pub params: BoostParams,
}

impl BoostedTreesModel {
    pub fn constant(base_score: f64, n_features: usize, task: Task, params: BoostParams) -> Self {
        BoostedTreesModel {
            trees: Vec::new(),
            base_score,
            n_features,
            task,
            params,
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<ScoreVector> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let eta = self.params.learning_rate;
        let values = (0..x.nrows())
            .map(|i| {
                let mut s = self.base_score;
                for t in &self.trees {
                    s += eta * t.predict_row(x, i);
                }
                s
            })
            .collect();
        ScoreVector::new(values, scale_for(self.task))
    }

    pub fn is_valid(&self) -> bool {
        self.base_score.is_finite()
            && self.trees.len() <= self.params.rounds
            && self.trees.iter().all(|t| t.is_valid(self.n_features))
    }
}

#[derive(Debug, Clone)]
pub struct BoostFit {
    pub model: BoostedTreesModel,
    /// Training scores accumulated during fitting; equal to `model.predict(x)`.
    pub train_scores: Vec<f64>,
}

/// Fits `params.rounds` trees. Each round asks `objective` for gradients at the
/// current scores, floors the hessians at [`HESS_FLOOR`], grows one tree and
/// adds it with shrinkage.
pub fn boost_fit<O: BoostObjective + ?Sized>(
    x: &DMatrix<f64>,
    task: Task,
    base_score: f64,
    params: &BoostParams,
    objective: &mut O,
) -> Result<BoostFit> {
    params.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if !base_score.is_finite() {
        return Err(Error::NonFinite("base score".into()));
    }
    let index = FeatureIndex::new(x);
    let tree_params = params.tree();
    let eta = params.learning_rate;
    let mut scores = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.rounds);
    for round in 0..params.rounds {
        let batch = objective.grad_hess(round, &scores)?;
        check_len(n, batch.grad.len())?;
        let batch = GradHessBatch::new(batch.grad, batch.hess)?.floored();
        let (tree, leaves) = grow_tree(&index, x, &batch.grad, &batch.hess, &tree_params);
        for (s, &leaf) in scores.iter_mut().zip(&leaves) {
            *s += eta * tree.leaf_weight(leaf);
        }
        trees.push(tree);
        objective.after_round(round, &scores)?;
    }
    Ok(BoostFit {
        model: BoostedTreesModel {
            trees,
            base_score,
            n_features: x.ncols(),
            task,
            params: *params,
        },
        train_scores: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{bce, mse, mse_value};

    fn mse_objective(y: Vec<f64>) -> impl FnMut(usize, &[f64]) -> Result<GradHessBatch> {
        move |_, u| {
            let e = mse(u, &y)?;
            GradHessBatch::new(e.grad, e.hess)
        }
    }

    #[test]
    fn constant_target_depth_zero() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i + j) as f64);
        let y = vec![3.5; 6];
        let p = BoostParams {
            max_depth: 0,
            learning_rate: 1.0,
            rounds: 1,
            l2_reg: 0.0,
            min_child_weight: 0.0,
        };
        let fit = boost_fit(&x, Task::Regression, 3.5, &p, &mut mse_objective(y)).unwrap();
        let pred = fit.model.predict(&x).unwrap();
        assert!(pred.values.iter().all(|&v| v == 3.5));
        // from a zero base one unregularized Newton round lands on c
        let fit = boost_fit(&x, Task::Regression, 0.0, &p, &mut mse_objective(vec![3.5; 6])).unwrap();
        assert!(fit.train_scores.iter().all(|&v| (v - 3.5).abs() < 1e-12));
    }

    #[test]
    fn zero_trees_predict_base() {
        let m = BoostedTreesModel::constant(0.25, 3, Task::Classification, BoostParams::default());
        let x = DMatrix::zeros(4, 3);
        assert_eq!(m.predict(&x).unwrap().values, vec![0.25; 4]);
        assert!(matches!(
            m.predict(&DMatrix::zeros(4, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn xor_is_learned() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..200 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            rows.extend([a, b]);
            y.push(((a > 0.5) ^ (b > 0.5)) as u8 as f64);
        }
        let x = DMatrix::from_row_slice(200, 2, &rows);
        let p = BoostParams {
            max_depth: 2,
            rounds: 50,
            ..BoostParams::default()
        };
        let yy = y.clone();
        let mut obj = move |_: usize, u: &[f64]| {
            let e = bce(u, &yy)?;
            GradHessBatch::new(e.grad, e.hess)
        };
        let fit = boost_fit(&x, Task::Classification, 0.0, &p, &mut obj).unwrap();
        let acc = fit
            .train_scores
            .iter()
            .zip(&y)
            .filter(|(s, y)| ((**s > 0.0) as u8 as f64) == **y)
            .count() as f64
            / 200.0;
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn cached_scores_match_prediction() {
        let x = DMatrix::from_fn(80, 3, |i, j| ((i * 7 + j * 13) % 17) as f64 / 3.0);
        let y: Vec<f64> = (0..80).map(|i| (i % 5) as f64 - x[(i, 1)]).collect();
        let p = BoostParams {
            rounds: 30,
            ..BoostParams::default()
        };
        let fit = boost_fit(&x, Task::Regression, 0.3, &p, &mut mse_objective(y)).unwrap();
        assert_eq!(fit.model.predict(&x).unwrap().values, fit.train_scores);
        assert!(fit.model.is_valid());
        assert_eq!(fit.model.trees.len(), 30);
    }

    #[test]
    fn mse_never_increases_per_round() {
        let x = DMatrix::from_fn(60, 2, |i, j| ((i * 31 + j * 11) % 23) as f64);
        let y: Vec<f64> = (0..60).map(|i| ((i * i) % 13) as f64).collect();
        let yy = y.clone();
        let mut losses = Vec::new();
        let mut obj = |_: usize, u: &[f64]| {
            losses.push(mse_value(u, &yy)?);
            let e = mse(u, &yy)?;
            GradHessBatch::new(e.grad, e.hess)
        };
        let p = BoostParams {
            rounds: 40,
            ..BoostParams::default()
        };
        boost_fit(&x, Task::Regression, 0.0, &p, &mut obj).unwrap();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn non_finite_gradients_rejected() {
        let x = DMatrix::zeros(3, 1);
        let mut obj = |_: usize, _: &[f64]| Ok(GradHessBatch {
            grad: vec![f64::NAN; 3],
            hess: vec![1.0; 3],
        });
        let r = boost_fit(&x, Task::Regression, 0.0, &BoostParams::default(), &mut obj);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn stretch_scales_rounds_and_rate() {
        let p = BoostParams::default().stretched(4);
        assert_eq!(p.rounds, 800);
        assert_eq!(p.learning_rate, 0.025);
    }
}
