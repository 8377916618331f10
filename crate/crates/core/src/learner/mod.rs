//! Trainable predictors and their on-disk format.

mod boost;
mod linear;
pub mod tree;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use boost::{
    boost_fit, BoostFit, BoostObjective, BoostParams, BoostedTreesModel, GradHessBatch, HESS_FLOOR,
};
pub use linear::{
    augment, linear_bce, linear_rounds, logreg_fit, logreg_newton, newton_fit, ols_fit, LinearModel, LogRegFit,
    NewtonFit, NewtonParams, ScoreObjective,
};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::loss::ScoreVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Boosted(BoostedTreesModel),
}

impl Model {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<ScoreVector> {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::Boosted(m) => m.predict(x),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Model::Linear(m) => m.task,
            Model::Boosted(m) => m.task,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Linear(m) => m.n_features(),
            Model::Boosted(m) => m.n_features,
        }
    }
}

pub const MODEL_FORMAT: &str = "fairadj-model";
pub const MODEL_VERSION: u32 = 1;

/// Which training procedure produced a saved model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Baseline,
    Joint,
    Adjuster,
}

/// JSON model file: a format tag and version, training metadata, and the model.
///
/// An adjuster file holds only the offset model `g`; predictions need the
/// baseline it was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub role: Role,
    pub lambda: f64,
    pub penalty: Option<String>,
    pub feature_names: Vec<String>,
    pub model: Model,
}

impl ModelFile {
    pub fn new(role: Role, lambda: f64, penalty: Option<String>, feature_names: Vec<String>, model: Model) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            role,
            lambda,
            penalty,
            feature_names,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unknown format tag '{}'", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported version {} (expected {MODEL_VERSION})",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
