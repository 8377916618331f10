use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Method, SearchSpec};
use crate::data::{make_folds, split, Dataset};
use crate::error::{Error, Result};
use crate::learner::Model;
use crate::metrics::evaluate;
use crate::train::{fit_adjuster, fit_baseline, fit_joint, AdjustInput, TrainConfig};

pub const CURVE_FILE: &str = "lambda_curve.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method: Method,
    pub lambda: f64,
    pub mean_di: f64,
    pub mean_accuracy: f64,
    /// Cells with a defined disparate impact.
    pub n_cells: usize,
    /// Cells whose training failed; any failure makes the point unusable.
    pub failed: usize,
    /// Added by bisection between grid values.
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSearch {
    pub method: Method,
    pub best: f64,
    pub best_di: f64,
    /// Every evaluated lambda, ascending.
    pub curve: Vec<CurvePoint>,
    pub warning: Option<String>,
}

struct Cell {
    train: Dataset,
    test: Dataset,
    baseline: Model,
}

fn evaluate_lambda(cells: &[Cell], method: Method, cfg: &TrainConfig, lambda: f64) -> (f64, f64, usize, usize) {
    let cfg = cfg.with_lambda(lambda);
    let results: Vec<Result<(f64, Option<f64>)>> = cells
        .par_iter()
        .map(|c| {
            let x = c.test.features();
            let scores = match method {
                Method::Joint => fit_joint(&c.train, &cfg)?.model.predict(x)?.values,
                Method::Adjuster => {
                    let g = fit_adjuster(&c.baseline, AdjustInput::labeled(&c.train), &cfg)?.model;
                    crate::train::predict_adjusted(&c.baseline, &g, x)?.values
                }
                Method::Baseline => c.baseline.predict(x)?.values,
            };
            let e = evaluate(&scores, &c.test)?;
            Ok((e.accuracy, e.disparate_impact))
        })
        .collect();
    let mut acc = 0.0;
    let mut di = Vec::new();
    let mut failed = 0;
    for r in results {
        match r {
            Ok((a, d)) => {
                acc += a;
                di.extend(d);
            }
            Err(_) => failed += 1,
        }
    }
    if failed > 0 || di.is_empty() {
        return (f64::NAN, f64::NAN, di.len(), failed);
    }
    let mean_di = di.iter().sum::<f64>() / di.len() as f64;
    (mean_di, acc / cells.len() as f64, di.len(), failed)
}

/// Mean cross-validated disparate impact of `method` at every grid lambda
/// (on the search seeds), optionally refined by bisection inside the grid
/// interval that brackets the target. Returns the evaluated lambda whose mean
/// DI is closest to the target; ties go to the smaller lambda.
pub fn lambda_search(
    ds: &Dataset,
    method: Method,
    spec: &SearchSpec,
    k: usize,
    cfg: &TrainConfig,
) -> Result<LambdaSearch> {
    if spec.grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if method == Method::Baseline {
        return Err(Error::InvalidArgument("lambda search needs joint or adjuster".into()));
    }
    let mut grid = spec.grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut jobs = Vec::new();
    for &seed in &spec.seeds {
        let plan = make_folds(ds.n(), k, seed)?;
        for fold in 0..k {
            jobs.push(split(ds, &plan, fold)?);
        }
    }
    let cells = jobs
        .into_par_iter()
        .map(|s| {
            let baseline = fit_baseline(&s.train, cfg)?;
            Ok(Cell {
                train: s.train,
                test: s.test,
                baseline,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut curve = Vec::new();
    let point = |lambda: f64, refined: bool| -> CurvePoint {
        let (mean_di, mean_accuracy, n_cells, failed) = evaluate_lambda(&cells, method, cfg, lambda);
        CurvePoint {
            method,
            lambda,
            mean_di,
            mean_accuracy,
            n_cells,
            failed,
            refined,
        }
    };
    for &l in &grid {
        curve.push(point(l, false));
    }

    let side = |p: &CurvePoint| (p.mean_di - spec.target).signum();
    if spec.refine > 0 {
        let best_i = closest(&curve, spec.target);
        let bracket = [best_i.checked_sub(1).map(|i| (i, best_i)), Some((best_i, best_i + 1))]
            .into_iter()
            .flatten()
            .find(|&(i, j)| {
                j < curve.len()
                    && curve[i].mean_di.is_finite()
                    && curve[j].mean_di.is_finite()
                    && side(&curve[i]) != side(&curve[j])
            });
        if let Some((i, j)) = bracket {
            let (mut lo, mut hi) = (curve[i].clone(), curve[j].clone());
            for _ in 0..spec.refine {
                let mid = if lo.lambda > 0.0 {
                    (lo.lambda * hi.lambda).sqrt()
                } else {
                    0.5 * hi.lambda
                };
                let p = point(mid, true);
                if side(&p) == side(&lo) {
                    lo = p.clone();
                } else {
                    hi = p.clone();
                }
                curve.push(p);
            }
        }
    }
    curve.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let best = curve[closest(&curve, spec.target)].clone();
    let warning = if !(best.mean_di - spec.target).abs().le(&0.25) {
        Some(format!(
            "no lambda brings mean disparate impact within 0.25 of {} (best {} at lambda {})",
            spec.target, best.mean_di, best.lambda
        ))
    } else {
        None
    };
    Ok(LambdaSearch {
        method,
        best: best.lambda,
        best_di: best.mean_di,
        curve,
        warning,
    })
}

fn closest(curve: &[CurvePoint], target: f64) -> usize {
    let mut best = 0;
    let dist = |p: &CurvePoint| {
        let d = (p.mean_di - target).abs();
        if d.is_nan() {
            f64::INFINITY
        } else {
            d
        }
    };
    for i in 1..curve.len() {
        let (di, db) = (dist(&curve[i]), dist(&curve[best]));
        if di < db || (di == db && curve[i].lambda < curve[best].lambda) {
            best = i;
        }
    }
    best
}
