//! Tabular datasets with a binary protected attribute, CSV loading, dataset
//! manifests, seeded cross-validation folds and synthetic generators.

mod folds;
mod load;
mod manifest;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub use folds::{make_folds, split, FoldPlan, Split};
pub use load::{load_csv, Schema};
pub use manifest::{default_data_root, Manifest, ManifestEntry, DATA_DIR_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "reg")]
    Regression,
    #[serde(rename = "clf")]
    Classification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "reg",
            Task::Classification => "clf",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reg" | "regression" => Ok(Task::Regression),
            "clf" | "classification" => Ok(Task::Classification),
            other => Err(Error::InvalidArgument(format!(
                "unknown task '{other}' (expected reg or clf)"
            ))),
        }
    }
}

/// Feature matrix, labels and a binary protected attribute (1 = protected group).
///
/// Immutable after construction. Instances built through [`Dataset::new`]
/// always have both protected groups populated; fold subsets produced by
/// [`split`] may not, and carry a warning on the [`Split`] instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<f64>,
    protected: Vec<u8>,
    favorable_label: u8,
    feature_names: Vec<String>,
    task: Task,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<f64>,
        protected: Vec<u8>,
        favorable_label: u8,
        feature_names: Vec<String>,
        task: Task,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset has no rows".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidArgument("dataset has no features".into()));
        }
        check_len(n, labels.len())?;
        check_len(n, protected.len())?;
        check_len(features.ncols(), feature_names.len())?;
        if favorable_label > 1 {
            return Err(Error::InvalidArgument(format!(
                "favorable label must be 0 or 1, got {favorable_label}"
            )));
        }
        if let Some(i) = protected.iter().position(|&p| p > 1) {
            return Err(Error::InvalidArgument(format!(
                "protected value {} at row {i} is not 0/1",
                protected[i]
            )));
        }
        if task == Task::Classification {
            if let Some(i) = labels.iter().position(|&y| y != 0.0 && y != 1.0) {
                return Err(Error::InvalidLabel {
                    row: i,
                    value: labels[i],
                });
            }
        } else if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("labels".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features".into()));
        }
        let ds = Dataset {
            features,
            labels,
            protected,
            favorable_label,
            feature_names,
            task,
        };
        match ds.group_sizes() {
            (0, _) => Err(Error::EmptyProtectedGroup("protected (=1)")),
            (_, 0) => Err(Error::EmptyProtectedGroup("unprotected (=0)")),
            _ => Ok(ds),
        }
    }

    /// Row subset in the given order. Skips the non-empty-group check.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let features = self.features.select_rows(rows.iter());
        Dataset {
            features,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            protected: rows.iter().map(|&i| self.protected[i]).collect(),
            favorable_label: self.favorable_label,
            feature_names: self.feature_names.clone(),
            task: self.task,
        }
    }

    /// Same rows with the label vector replaced; used to show that a procedure
    /// never reads labels.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Dataset> {
        check_len(self.n(), labels.len())?;
        Ok(Dataset {
            labels,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn protected(&self) -> &[u8] {
        &self.protected
    }

    pub fn favorable_label(&self) -> u8 {
        self.favorable_label
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// (|protected|, |unprotected|)
    pub fn group_sizes(&self) -> (usize, usize) {
        let p = self.protected.iter().filter(|&&g| g == 1).count();
        (p, self.protected.len() - p)
    }
}
