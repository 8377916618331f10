//! Cross-validated experiments over the three training procedures.

mod report;
mod search;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{
    emit_tradeoff, format_table, read_report_csv, summarize, write_report, write_tradeoff,
    SummaryRow, TradeoffPoint, REPORT_FILE, SUMMARY_FILE, TABLE_FILE,
};
pub use search::{lambda_search, CurvePoint, LambdaSearch, CURVE_FILE};

use crate::data::{make_folds, split, Dataset, Manifest};
use crate::error::{Error, Result};
use crate::fairness::PenaltyKind;
use crate::metrics::{delta_loss, evaluate, EvalResult};
use crate::theory::check_cross_entropy_bound;
use crate::train::{fit_adjuster, fit_baseline, fit_joint, AdjustInput, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Joint,
    Adjuster,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Baseline, Method::Joint, Method::Adjuster];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Joint => "joint",
            Method::Adjuster => "adjuster",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "joint" => Ok(Method::Joint),
            "adjuster" => Ok(Method::Adjuster),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Default lambda grid before per-penalty scaling.
pub const DEFAULT_GRID: [f64; 8] = [0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];

/// Multiplier applied to [`DEFAULT_GRID`]. The gap penalties have gradients
/// of order `1/|group|` per row, so their useful range sits higher.
pub fn grid_scale(kind: PenaltyKind) -> f64 {
    match kind {
        PenaltyKind::Adversarial => 1.0,
        PenaltyKind::OverpredictionGap | PenaltyKind::OverpredictionGapSquared => 100.0,
    }
}

pub fn default_grid(kind: PenaltyKind) -> Vec<f64> {
    DEFAULT_GRID.iter().map(|l| l * grid_scale(kind)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LambdaChoice {
    Fixed(f64),
    Search(SearchSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpec {
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub target: f64,
    /// Extra bisection points between the two grid values around the target.
    pub refine: usize,
}

impl SearchSpec {
    pub fn new(kind: PenaltyKind) -> Self {
        SearchSpec {
            grid: default_grid(kind),
            seeds: vec![1000, 1001],
            target: 1.0,
            refine: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub methods: Vec<Method>,
    pub lambda: LambdaChoice,
    /// Learner, penalty and adversary settings; its `lambda` is overridden.
    pub train: TrainConfig,
}

impl ExperimentSpec {
    /// Desk-scale defaults: 5 seeds, 5 folds, all methods, lambda searched.
    pub fn desk(dataset: &str, train: TrainConfig) -> Self {
        ExperimentSpec {
            dataset: dataset.to_string(),
            seeds: (0..5).collect(),
            k: 5,
            methods: Method::ALL.to_vec(),
            lambda: LambdaChoice::Search(SearchSpec::new(train.penalty)),
            train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidArgument("seeds and methods must be non-empty".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidArgument("need at least 2 folds".into()));
        }
        if let LambdaChoice::Search(s) = &self.lambda {
            if s.grid.is_empty() || s.seeds.is_empty() {
                return Err(Error::InvalidArgument("lambda search needs a grid and seeds".into()));
            }
        }
        self.train.validate()
    }

    fn has(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

/// One (seed, fold, method) result. Metric fields are empty on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub seed: u64,
    pub fold: usize,
    pub method: Method,
    pub lambda: f64,
    pub n_test: usize,
    pub accuracy: Option<f64>,
    pub disparate_impact: Option<f64>,
    pub rate_protected: Option<f64>,
    pub rate_unprotected: Option<f64>,
    /// Loss-gap diagnostic on the test fold; needs both fairness methods.
    pub delta_loss: Option<f64>,
    /// Per-row slack of the cross-entropy bound on the test fold (diagnostic).
    pub bound_slack: Option<f64>,
    pub warning: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub lambda_joint: f64,
    pub lambda_adjuster: f64,
    pub rows: Vec<CellRow>,
    pub summary: Vec<SummaryRow>,
    pub searches: Vec<LambdaSearch>,
}

impl ExperimentReport {
    pub fn summary_for(&self, method: Method, metric: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.metric == metric)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

struct CellOutcome {
    baseline: EvalResult,
    joint: Option<EvalResult>,
    adjuster: Option<EvalResult>,
    delta_loss: Option<f64>,
    bound_slack: Option<f64>,
}

fn run_cell(
    ds: &Dataset,
    plan: &crate::data::FoldPlan,
    fold: usize,
    methods: (bool, bool),
    cfg: &TrainConfig,
    lambda_joint: f64,
    lambda_adjuster: f64,
) -> Result<(CellOutcome, Option<String>)> {
    let parts = split(ds, plan, fold)?;
    let (train, test) = (&parts.train, &parts.test);
    let xt = test.features();
    let baseline = fit_baseline(train, cfg)?;
    let f = baseline.predict(xt)?.values;
    let base_eval = evaluate(&f, test)?;
    let h = if methods.0 {
        Some(fit_joint(train, &cfg.with_lambda(lambda_joint))?.model.predict(xt)?.values)
    } else {
        None
    };
    let g = if methods.1 {
        let adj = fit_adjuster(&baseline, AdjustInput::labeled(train), &cfg.with_lambda(lambda_adjuster))?;
        Some(adj.model.predict(xt)?.values)
    } else {
        None
    };
    let joint = h.as_ref().map(|h| evaluate(h, test)).transpose()?;
    let adjuster = g
        .as_ref()
        .map(|g| {
            let u: Vec<f64> = f.iter().zip(g).map(|(a, b)| a + b).collect();
            evaluate(&u, test)
        })
        .transpose()?;
    let (delta, slack) = match (&h, &g) {
        (Some(h), Some(g)) if ds.task() == crate::data::Task::Classification => {
            let y = test.labels();
            let d = delta_loss(&f, h, g, y)?;
            let b = check_cross_entropy_bound(&f, h, g, y)?;
            (Some(d), Some(b.bound.slack / y.len() as f64))
        }
        _ => (None, None),
    };
    Ok((
        CellOutcome {
            baseline: base_eval,
            joint,
            adjuster,
            delta_loss: delta,
            bound_slack: slack,
        },
        parts.warning,
    ))
}

/// Every (seed, fold) cell with fixed lambdas, in seed-then-fold order.
pub(crate) fn run_cells(
    ds: &Dataset,
    seeds: &[u64],
    k: usize,
    methods: &[Method],
    cfg: &TrainConfig,
    lambda_joint: f64,
    lambda_adjuster: f64,
) -> Result<Vec<CellRow>> {
    let plans = seeds
        .iter()
        .map(|&s| make_folds(ds.n(), k, s))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|s| (0..k).map(move |f| (s, f)))
        .collect();
    let want = (methods.contains(&Method::Joint), methods.contains(&Method::Adjuster));
    let cells: Vec<_> = jobs
        .par_iter()
        .map(|&(s, fold)| {
            (
                s,
                fold,
                run_cell(ds, &plans[s], fold, want, cfg, lambda_joint, lambda_adjuster),
            )
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len() * methods.len());
    for (s, fold, outcome) in cells {
        let seed = seeds[s];
        let n_test = plans[s].test_rows(fold).len();
        for &m in &Method::ALL {
            if !methods.contains(&m) {
                continue;
            }
            let lambda = match m {
                Method::Baseline => 0.0,
                Method::Joint => lambda_joint,
                Method::Adjuster => lambda_adjuster,
            };
            let mut row = CellRow {
                seed,
                fold,
                method: m,
                lambda,
                n_test,
                accuracy: None,
                disparate_impact: None,
                rate_protected: None,
                rate_unprotected: None,
                delta_loss: None,
                bound_slack: None,
                warning: None,
                error: None,
            };
            match &outcome {
                Ok((o, warning)) => {
                    let e = match m {
                        Method::Baseline => Some(o.baseline),
                        Method::Joint => o.joint,
                        Method::Adjuster => o.adjuster,
                    };
                    if let Some(e) = e {
                        row.accuracy = Some(e.accuracy);
                        row.disparate_impact = e.disparate_impact;
                        row.rate_protected = Some(e.favorable_rate_protected);
                        row.rate_unprotected = Some(e.favorable_rate_unprotected);
                    }
                    if m == Method::Adjuster {
                        row.delta_loss = o.delta_loss;
                        row.bound_slack = o.bound_slack;
                    }
                    row.warning = warning.clone();
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Runs `spec` on an already loaded dataset.
pub fn run_experiment_on(spec: &ExperimentSpec, ds: &Dataset) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut searches = Vec::new();
    let (lambda_joint, lambda_adjuster) = match &spec.lambda {
        LambdaChoice::Fixed(l) => (*l, *l),
        LambdaChoice::Search(s) => {
            let mut pick = |m: Method| -> Result<f64> {
                if !spec.has(m) {
                    return Ok(0.0);
                }
                let found = lambda_search(ds, m, s, spec.k, &spec.train)?;
                let best = found.best;
                searches.push(found);
                Ok(best)
            };
            (pick(Method::Joint)?, pick(Method::Adjuster)?)
        }
    };
    let rows = run_cells(
        ds,
        &spec.seeds,
        spec.k,
        &spec.methods,
        &spec.train,
        lambda_joint,
        lambda_adjuster,
    )?;
    let summary = summarize(&rows);
    Ok(ExperimentReport {
        dataset: spec.dataset.clone(),
        lambda_joint,
        lambda_adjuster,
        rows,
        summary,
        searches,
    })
}

/// Loads the spec's dataset from `manifest` and runs it.
pub fn run_experiment(spec: &ExperimentSpec, manifest: &Manifest) -> Result<ExperimentReport> {
    let ds = manifest.load_dataset(&spec.dataset)?;
    if ds.task() != spec.train.task {
        return Err(Error::InvalidArgument(format!(
            "dataset '{}' is a {} task",
            spec.dataset,
            ds.task()
        )));
    }
    run_experiment_on(spec, &ds)
}

/// Replication targets for a shipped dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Targets {
    pub baseline_di: (f64, f64),
    pub fair_di: (f64, f64),
    pub max_accuracy_gap: f64,
    pub max_abs_delta_loss: f64,
}

pub fn targets_for(dataset: &str) -> Option<Targets> {
    match dataset {
        "german" => Some(Targets {
            baseline_di: (0.72, 0.92),
            fair_di: (0.95, 1.05),
            max_accuracy_gap: 0.01,
            max_abs_delta_loss: 0.01,
        }),
        "compas" => Some(Targets {
            baseline_di: (0.60, 0.80),
            fair_di: (0.93, 1.07),
            max_accuracy_gap: 0.01,
            max_abs_delta_loss: 0.01,
        }),
        "adult" => Some(Targets {
            baseline_di: (0.0, 0.3),
            fair_di: (0.9, 1.15),
            max_accuracy_gap: f64::INFINITY,
            max_abs_delta_loss: f64::INFINITY,
        }),
        _ => None,
    }
}

/// One named pass/fail line of a replication check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetCheck {
    pub name: String,
    pub value: f64,
    pub pass: bool,
}

fn within(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

pub fn check_targets(report: &ExperimentReport, t: &Targets) -> Vec<TargetCheck> {
    let mean = |m: Method, metric: &str| report.summary_for(m, metric).map_or(f64::NAN, |r| r.mean);
    let mut out = Vec::new();
    let base = mean(Method::Baseline, "disparate_impact");
    out.push(TargetCheck {
        name: format!("baseline DI in [{}, {}]", t.baseline_di.0, t.baseline_di.1),
        value: base,
        pass: within(base, t.baseline_di),
    });
    for m in [Method::Joint, Method::Adjuster] {
        let di = mean(m, "disparate_impact");
        out.push(TargetCheck {
            name: format!("{m} DI in [{}, {}]", t.fair_di.0, t.fair_di.1),
            value: di,
            pass: within(di, t.fair_di),
        });
    }
    if t.max_accuracy_gap.is_finite() {
        let gap = (mean(Method::Adjuster, "accuracy") - mean(Method::Joint, "accuracy")).abs();
        out.push(TargetCheck {
            name: format!("|accuracy(adjuster) - accuracy(joint)| <= {}", t.max_accuracy_gap),
            value: gap,
            pass: gap <= t.max_accuracy_gap,
        });
    }
    if t.max_abs_delta_loss.is_finite() {
        let d = mean(Method::Adjuster, "delta_loss");
        out.push(TargetCheck {
            name: format!("|delta loss| <= {}", t.max_abs_delta_loss),
            value: d,
            pass: d.abs() <= t.max_abs_delta_loss,
        });
    }
    let failures = report.failures();
    out.push(TargetCheck {
        name: "no failed cells".into(),
        value: failures as f64,
        pass: failures == 0,
    });
    out
}
