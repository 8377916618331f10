//! Baseline training, adversarial debiasing and a label-free post-hoc
//! fairness adjuster for tabular models, with metrics, numerical checks of
//! the loss identities and bounds relating the two fairness approaches, and a
//! cross-validated benchmark runner.

pub mod bench;
pub mod data;
pub mod error;
pub mod fairness;
pub mod learner;
pub mod loss;
pub mod metrics;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
