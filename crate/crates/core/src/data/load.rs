use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Dataset, Task};
use crate::error::{Error, Result};

/// Column roles for [`load_csv`].
///
/// Every column that is not the label, not dropped, and not the protected
/// column (unless `protected_is_feature`) becomes a feature. Columns listed in
/// `categorical` are one-hot encoded with their levels sorted lexicographically,
/// producing features named `column=level`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub label: String,
    pub protected: String,
    pub favorable: u8,
    pub task: Task,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub drop: Vec<String>,
    #[serde(default)]
    pub protected_is_feature: bool,
}

impl Schema {
    pub fn new(label: &str, protected: &str, favorable: u8, task: Task) -> Self {
        Schema {
            label: label.to_string(),
            protected: protected.to_string(),
            favorable,
            task,
            categorical: Vec::new(),
            drop: Vec::new(),
            protected_is_feature: false,
        }
    }
}

const MISSING: [&str; 4] = ["", "NA", "NaN", "?"];

enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let find = |name: &str| -> Result<usize> {
        let hits: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [i] => Ok(*i),
            [] => Err(Error::Schema(format!("column '{name}' not found in header"))),
            _ => Err(Error::Schema(format!("column '{name}' appears more than once"))),
        }
    };
    let label_col = find(&schema.label)?;
    let protected_col = find(&schema.protected)?;
    if label_col == protected_col {
        return Err(Error::Schema(
            "label and protected must be different columns".into(),
        ));
    }
    for c in schema.categorical.iter().chain(schema.drop.iter()) {
        find(c)?;
    }

    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != label_col)
        .filter(|&c| c != protected_col || schema.protected_is_feature)
        .filter(|&c| !schema.drop.contains(&header[c]))
        .collect();
    let is_categorical: Vec<bool> = feature_cols
        .iter()
        .map(|&c| schema.categorical.contains(&header[c]))
        .collect();

    let mut columns: Vec<Column> = is_categorical
        .iter()
        .map(|&cat| {
            if cat {
                Column::Categorical(Vec::new())
            } else {
                Column::Numeric(Vec::new())
            }
        })
        .collect();
    let mut labels = Vec::new();
    let mut protected = Vec::new();

    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(csv_err)?;
        if record.len() != header.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: format!(
                    "row {row} has {} fields, header has {}",
                    record.len(),
                    header.len()
                ),
            });
        }
        let cell = |c: usize| -> Result<&str> {
            let raw = record[c].trim();
            if MISSING.contains(&raw) {
                return Err(Error::MissingValue {
                    row,
                    column: header[c].clone(),
                });
            }
            Ok(raw)
        };
        let number = |c: usize| -> Result<f64> {
            let raw = cell(c)?;
            let v: f64 = raw.parse().map_err(|_| Error::Cell {
                row,
                column: header[c].clone(),
                message: format!("'{raw}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row,
                    column: header[c].clone(),
                    message: format!("'{raw}' is not finite"),
                });
            }
            Ok(v)
        };

        let y = number(label_col)?;
        if schema.task == Task::Classification && y != 0.0 && y != 1.0 {
            return Err(Error::InvalidLabel { row, value: y });
        }
        labels.push(y);

        let p = number(protected_col)?;
        if p != 0.0 && p != 1.0 {
            return Err(Error::Cell {
                row,
                column: header[protected_col].clone(),
                message: format!("protected value {p} is not 0/1"),
            });
        }
        protected.push(p as u8);

        for (col, &c) in columns.iter_mut().zip(&feature_cols) {
            match col {
                Column::Numeric(v) => v.push(number(c)?),
                Column::Categorical(v) => v.push(cell(c)?.to_string()),
            }
        }
    }

    let n = labels.len();
    if n == 0 {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }

    let mut names = Vec::new();
    let mut encoded: Vec<Vec<f64>> = Vec::new();
    for (col, &c) in columns.into_iter().zip(&feature_cols) {
        match col {
            Column::Numeric(v) => {
                names.push(header[c].clone());
                encoded.push(v);
            }
            Column::Categorical(v) => {
                let levels: BTreeSet<&str> = v.iter().map(String::as_str).collect();
                let index: HashMap<&str, usize> =
                    levels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
                let base = encoded.len();
                for level in &levels {
                    names.push(format!("{}={}", header[c], level));
                    encoded.push(vec![0.0; n]);
                }
                for (i, value) in v.iter().enumerate() {
                    encoded[base + index[value.as_str()]][i] = 1.0;
                }
            }
        }
    }
    if encoded.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let d = encoded.len();
    let features = DMatrix::from_fn(n, d, |i, j| encoded[j][i]);
    Dataset::new(
        features,
        labels,
        protected,
        schema.favorable,
        names,
        schema.task,
    )
}
