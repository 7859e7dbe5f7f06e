//! Executable versions of the analytic pathologies: each experiment returns
//! an [`ExperimentReport`] whose checks carry both the computed and the
//! expected value, so a failure is diagnosable from the report alone.

mod bivariate;
mod closure;
mod density;
mod rescale;
mod uniform;

pub use bivariate::{
    bivariate_experiment, bivariate_overfit_score, conditional_density_score, quadrature_score, BivariateParams,
    QuadratureSpec,
};
pub use closure::{boolean_closure, closure_degeneration_check, ClosureParams, ClosureResult, MAX_OBJECTS};
pub use density::{density_objective, density_shift_experiment, squared_denominator, squared_denominator_derivative, DensityParams};
pub use rescale::{pairing_merge_map, random_stats, rescaling_experiment, RescaleParams, SplitModel};
pub use uniform::{ideal_uniform_stats, uniform_ideal_experiment, UniformParams};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::eval::EvalError;
use crate::tree::TreeError;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid experiment parameters: {0}")]
    InvalidSpec(String),
    #[error("column {0} is not binary")]
    NonBinaryColumn(usize),
    #[error("correlation R = {r} has R² ≥ 1/2, where the closed form gives nonsense values")]
    CorrelationOutOfRange { r: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A named comparison `lhs` vs `rhs` under a stated tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub pass: bool,
    pub tolerance: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl Check {
    /// Passes when `|lhs − rhs| ≤ tolerance`.
    pub fn absolute(lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self { pass: (lhs - rhs).abs() <= tolerance, tolerance, lhs, rhs }
    }

    /// Passes when `|lhs − rhs| ≤ tolerance·|rhs|`.
    pub fn relative(lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self { pass: (lhs - rhs).abs() <= tolerance * rhs.abs(), tolerance, lhs, rhs }
    }

    /// Passes when `lhs > rhs`.
    pub fn greater(lhs: f64, rhs: f64) -> Self {
        Self { pass: lhs > rhs, tolerance: 0.0, lhs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub parameters: serde_json::Value,
    pub scalars: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    pub checks: BTreeMap<String, Check>,
}

impl ExperimentReport {
    pub fn new(name: &str, parameters: impl Serialize) -> Self {
        Self {
            name: name.to_string(),
            parameters: serde_json::to_value(parameters).expect("parameters serialize"),
            scalars: BTreeMap::new(),
            series: BTreeMap::new(),
            checks: BTreeMap::new(),
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    pub fn check(&mut self, name: &str, check: Check) {
        self.checks.insert(name.to_string(), check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.values().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|(_, c)| !c.pass).map(|(n, _)| n.as_str()).collect()
    }
}
