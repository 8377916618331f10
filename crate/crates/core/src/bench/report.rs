use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellRow, ExperimentReport, Method, CURVE_FILE};
use crate::error::{Error, Result};
use crate::metrics::aggregate;

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TABLE_FILE: &str = "table.txt";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub ci95_halfwidth: f64,
    pub n_runs: usize,
}

type Getter = fn(&CellRow) -> Option<f64>;

const METRICS: [(&str, Getter); 4] = [
    ("accuracy", |r| r.accuracy),
    ("disparate_impact", |r| r.disparate_impact),
    ("delta_loss", |r| r.delta_loss),
    ("bound_slack", |r| r.bound_slack),
];

/// Mean and 95% interval of each metric per method, over the cells where
/// the metric is defined. Metrics with fewer than two values are omitted.
pub fn summarize(rows: &[CellRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for m in Method::ALL {
        for (name, get) in METRICS {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == m)
                .filter_map(get)
                .collect();
            if let Ok(a) = aggregate(&values) {
                out.push(SummaryRow {
                    method: m,
                    metric: name.to_string(),
                    mean: a.mean,
                    std: a.std,
                    ci95_halfwidth: a.ci95_halfwidth,
                    n_runs: a.n_runs,
                });
            }
        }
    }
    out
}

/// Aligned text table: one row per metric, one column per method.
pub fn format_table(report: &ExperimentReport) -> String {
    let methods: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| report.rows.iter().any(|r| r.method == *m))
        .collect();
    let mut out = format!(
        "dataset {}   lambda joint {}   lambda adjuster {}   cells {}   failed {}\n\n",
        report.dataset,
        report.lambda_joint,
        report.lambda_adjuster,
        report.rows.len(),
        report.failures()
    );
    out += &format!("{:<18}", "metric");
    for m in &methods {
        out += &format!("{:>20}", m.as_str());
    }
    out.push('\n');
    let labels = [
        ("accuracy", "accuracy"),
        ("disparate_impact", "disparate impact"),
        ("delta_loss", "delta loss"),
        ("bound_slack", "bound slack / n"),
    ];
    for (key, label) in labels {
        if !methods.iter().any(|m| report.summary_for(*m, key).is_some()) {
            continue;
        }
        out += &format!("{label:<18}");
        for m in &methods {
            let cell = match report.summary_for(*m, key) {
                Some(r) => format!("{:.4}±{:.4}", r.mean, r.ci95_halfwidth),
                None => "-".to_string(),
            };
            out += &format!("{cell:>20}");
        }
        out.push('\n');
    }
    out
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the per-cell CSV, the summary CSV, the text table, the lambda
/// curves (when searched) and the tradeoff points into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join(REPORT_FILE), &report.rows)?;
    write_csv(&dir.join(SUMMARY_FILE), &report.summary)?;
    let table = dir.join(TABLE_FILE);
    fs::write(&table, format_table(report)).map_err(|e| Error::io(&table, e))?;
    if !report.searches.is_empty() {
        let curve: Vec<_> = report.searches.iter().flat_map(|s| s.curve.iter().cloned()).collect();
        write_csv(&dir.join(CURVE_FILE), &curve)?;
    }
    write_tradeoff(&emit_tradeoff(&report.rows), &dir.join(TRADEOFF_FILE))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<CellRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<CellRow>, _>>()
        .map_err(|e| csv_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub method: String,
    pub seed: u64,
    pub accuracy: f64,
    pub disparate_impact: f64,
}

/// One point per (method, seed): fold-averaged accuracy and disparate impact,
/// sorted by method name then seed. Failed cells and undefined ratios are
/// left out of the averages.
pub fn emit_tradeoff(rows: &[CellRow]) -> Vec<TradeoffPoint> {
    let mut acc: BTreeMap<(String, u64), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.method.as_str().to_string(), r.seed)).or_default();
        if let Some(a) = r.accuracy {
            e.0.push(a);
        }
        if let Some(d) = r.disparate_impact {
            e.1.push(d);
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    acc.into_iter()
        .map(|((method, seed), (a, d))| TradeoffPoint {
            method,
            seed,
            accuracy: mean(&a),
            disparate_impact: mean(&d),
        })
        .collect()
}

pub fn write_tradeoff(points: &[TradeoffPoint], path: &Path) -> Result<()> {
    write_csv(path, points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, fold: usize, method: Method, acc: f64, di: Option<f64>) -> CellRow {
        CellRow {
            seed,
            fold,
            method,
            lambda: 0.0,
            n_test: 10,
            accuracy: Some(acc),
            disparate_impact: di,
            rate_protected: None,
            rate_unprotected: None,
            delta_loss: None,
            bound_slack: None,
            warning: None,
            error: None,
        }
    }

    fn rows() -> Vec<CellRow> {
        let mut v = Vec::new();
        for seed in 0..5 {
            for fold in 0..3 {
                let x = seed as f64 * 0.01 + fold as f64 * 0.001;
                v.push(row(seed, fold, Method::Joint, 0.7 + x, Some(0.9 + x)));
                v.push(row(seed, fold, Method::Adjuster, 0.6 + x, if fold == 1 { None } else { Some(1.0 + x) }));
            }
        }
        v
    }

    #[test]
    fn tradeoff_has_one_point_per_seed_and_method() {
        let pts = emit_tradeoff(&rows());
        assert_eq!(pts.len(), 10);
        let keys: Vec<_> = pts.iter().map(|p| (p.method.clone(), p.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(pts[0].method, "adjuster");
    }

    #[test]
    fn tradeoff_values_recompute_from_rows() {
        let rows = rows();
        for p in emit_tradeoff(&rows) {
            let mine: Vec<&CellRow> = rows
                .iter()
                .filter(|r| r.method.as_str() == p.method && r.seed == p.seed)
                .collect();
            let acc: f64 = mine.iter().map(|r| r.accuracy.unwrap()).sum::<f64>() / mine.len() as f64;
            let dis: Vec<f64> = mine.iter().filter_map(|r| r.disparate_impact).collect();
            let di = dis.iter().sum::<f64>() / dis.len() as f64;
            assert!((p.accuracy - acc).abs() < 1e-15);
            assert!((p.disparate_impact - di).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut rows = rows();
        rows[3].error = Some("boom, with comma".into());
        rows[3].accuracy = None;
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_report_csv(&path).unwrap(), rows);
    }

    #[test]
    fn summary_skips_undefined_values() {
        let s = summarize(&rows());
        let di = s
            .iter()
            .find(|r| r.method == Method::Adjuster && r.metric == "disparate_impact")
            .unwrap();
        assert_eq!(di.n_runs, 10);
        assert!(!s.iter().any(|r| r.method == Method::Baseline));
    }
}
