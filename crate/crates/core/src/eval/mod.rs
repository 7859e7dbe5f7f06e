//! Evaluation functions over a partition's sufficient statistics.
//!
//! Missing entries are excluded symmetrically: for every attribute the
//! class weights, conditionals and marginals are all computed over the
//! records where that attribute is observed. Without missing values the
//! weights reduce to `p(C_i)`.

mod asymmetric;

pub use asymmetric::{
    aggregate, asymmetric_eval, asymmetric_eval_stats, build_predictors, predicted_accuracy, predicted_name,
    predicting_accuracy, predicting_name, AsymmetricTerms, ClassToValue, PredictedAttribute, PredictingAttribute,
    PredictorMaps, RoleSplit, StepMemory, ValueToClass,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{merge_values, ContingencyTable, MomentColumn, PartitionStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("the partition has no discrete attributes")]
    NoDiscreteAttributes,
    #[error("the partition has no continuous attributes")]
    NoContinuousAttributes,
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("attribute {0:?} is not discrete")]
    NotDiscrete(String),
    #[error("attribute {0:?} is not continuous")]
    NotContinuous(String),
    #[error("merge map for {attribute:?} does not cover value {value:?}")]
    PartialMergeMap { attribute: String, value: String },
    #[error("class {0} has no records")]
    EmptyClass(usize),
    #[error("no predicted attributes")]
    EmptyPredictedSet,
    #[error("no predicting attributes")]
    EmptyPredictingSet,
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("inconsistent statistics: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fisher,
    Gennari,
    #[serde(rename = "scalefree")]
    ScaleFree,
    Asymmetric,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fisher" => Ok(Variant::Fisher),
            "gennari" => Ok(Variant::Gennari),
            "scalefree" | "scale-free" => Ok(Variant::ScaleFree),
            "asymmetric" => Ok(Variant::Asymmetric),
            other => Err(format!("unknown evaluation variant {other:?}")),
        }
    }
}

/// How the predicting attributes' accuracies are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aggregator {
    Max,
    /// Mean of the `n` largest values.
    TopN { n: usize },
}

/// Denominators used before any step memory exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FirstStep {
    #[default]
    UnitDenominator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricConfig {
    /// Weight of the classification term.
    pub class_weight: f64,
    pub aggregator: Aggregator,
    pub first_step: FirstStep,
}

impl Default for AsymmetricConfig {
    fn default() -> Self {
        Self { class_weight: 1.0, aggregator: Aggregator::Max, first_step: FirstStep::UnitDenominator }
    }
}

pub const DEFAULT_ACUITY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub variant: Variant,
    /// Floor applied to every standard deviation.
    pub acuity: f64,
    pub asym: AsymmetricConfig,
}

impl EvalConfig {
    pub fn new(variant: Variant) -> Self {
        Self { variant, acuity: DEFAULT_ACUITY, asym: AsymmetricConfig::default() }
    }

    pub fn with_acuity(mut self, acuity: f64) -> Self {
        self.acuity = acuity;
        self
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.acuity > 0.0 && self.acuity.is_finite()) {
            return Err(EvalError::InvalidConfig(format!("acuity must be positive, got {}", self.acuity)));
        }
        if !(self.asym.class_weight >= 0.0 && self.asym.class_weight.is_finite()) {
            return Err(EvalError::InvalidConfig("class weight must be nonnegative".into()));
        }
        if let Aggregator::TopN { n } = self.asym.aggregator {
            if n == 0 {
                return Err(EvalError::InvalidConfig("top-n aggregator needs n >= 1".into()));
            }
        }
        Ok(())
    }
}

/// `Σ_i p(C_i) Σ_k p(A=v_k|C_i)² − Σ_k p(A=v_k)²` for one table.
pub fn table_contribution(table: &ContingencyTable) -> f64 {
    let weights = table.class_weights();
    let conditional: f64 = weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(i, w)| w * table.conditional(i).iter().map(|p| p * p).sum::<f64>())
        .sum();
    let marginal: f64 = table.marginal().iter().map(|p| p * p).sum();
    conditional - marginal
}

/// Per-attribute term of the discrete criterion (no `1/M` factor).
pub fn discrete_attribute_contribution(stats: &PartitionStats, attribute: &str) -> Result<f64, EvalError> {
    Ok(table_contribution(stats.discrete(attribute)?))
}

/// Category utility over the discrete attributes:
/// `M⁻¹ Σ_j [Σ_i p(C_i) Σ_k p(A_j=V_jk|C_i)² − Σ_k p(A_j=V_jk)²]`.
pub fn fisher_eval(stats: &PartitionStats) -> Result<f64, EvalError> {
    let mut any = false;
    let sum: f64 = stats
        .discrete_tables()
        .inspect(|_| any = true)
        .map(table_contribution)
        .sum();
    if !any {
        return Err(EvalError::NoDiscreteAttributes);
    }
    Ok(sum / stats.classes() as f64)
}

fn floored(sigma: f64, acuity: f64) -> f64 {
    sigma.max(acuity)
}

fn gennari_column(col: &MomentColumn, acuity: f64) -> f64 {
    let weights = col.class_weights();
    let classes: f64 = col
        .per_class
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(m, w)| w / floored(m.std_dev(), acuity))
        .sum();
    if weights.iter().all(|w| *w == 0.0) {
        return 0.0;
    }
    classes - 1.0 / floored(col.root().std_dev(), acuity)
}

/// Continuous criterion with reciprocal standard deviations:
/// `M⁻¹ Σ_j [Σ_i p(C_i)/σ_{A_jC_i} − 1/σ_{A_j}]`, every σ floored at `acuity`.
pub fn gennari_eval(stats: &PartitionStats, acuity: f64) -> Result<f64, EvalError> {
    let mut any = false;
    let sum: f64 = stats
        .continuous_columns()
        .inspect(|_| any = true)
        .map(|c| gennari_column(c, acuity))
        .sum();
    if !any {
        return Err(EvalError::NoContinuousAttributes);
    }
    Ok(sum / stats.classes() as f64)
}

/// `Σ_i p(C_i) σ_{A}/σ_{AC_i}` for one column, or `None` when unobserved.
fn scalefree_column(col: &MomentColumn, acuity: f64) -> Option<f64> {
    let weights = col.class_weights();
    if weights.iter().all(|w| *w == 0.0) {
        return None;
    }
    let root = floored(col.root().std_dev(), acuity);
    Some(
        col.per_class
            .iter()
            .zip(&weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(m, w)| w * root / floored(m.std_dev(), acuity))
            .sum(),
    )
}

/// Scale-free continuous criterion `K⁻¹ Σ_i p(C_i) Σ_j σ_{A_j}/σ_{A_jC_i} − 1`
/// where `K` counts the observed continuous attributes.
pub fn scalefree_eval(stats: &PartitionStats, acuity: f64) -> Result<f64, EvalError> {
    let mut any = false;
    let (sum, observed) = stats
        .continuous_columns()
        .inspect(|_| any = true)
        .filter_map(|c| scalefree_column(c, acuity))
        .fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    if !any {
        return Err(EvalError::NoContinuousAttributes);
    }
    if observed == 0 {
        return Ok(0.0);
    }
    Ok(sum / observed as f64 - 1.0)
}

/// Dispatches to the symmetric criterion named by `config`.
pub fn symmetric_eval(stats: &PartitionStats, config: &EvalConfig) -> Result<f64, EvalError> {
    match config.variant {
        Variant::Fisher => fisher_eval(stats),
        Variant::Gennari => gennari_eval(stats, config.acuity),
        Variant::ScaleFree => scalefree_eval(stats, config.acuity),
        Variant::Asymmetric => Err(EvalError::InvalidConfig(
            "the asymmetric criterion needs a schema and step memory".into(),
        )),
    }
}

/// One class-weighted covariance between the conditionals of two values
/// that merge into the same coarse value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceTerm {
    pub first: String,
    pub second: String,
    pub coarse: String,
    pub cov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceIdentity {
    /// Contribution of the fine attribute.
    pub eval_fine: f64,
    /// Contribution of the merged attribute.
    pub eval_merged: f64,
    pub cov_terms: Vec<CovarianceTerm>,
    /// `eval_fine − (eval_merged − 2 Σ cov)`.
    pub residual: f64,
}

/// Checks the value-merging identity `eval_A = eval_B − 2 Σ cov(y_k, y_l)`
/// where the sum runs over pairs of fine values merged together and the
/// covariance is taken over classes weighted by class mass.
pub fn covariance_identity(
    stats: &PartitionStats,
    attribute: &str,
    merge_map: &BTreeMap<String, String>,
) -> Result<CovarianceIdentity, EvalError> {
    let fine = stats.discrete(attribute)?;
    let merged_stats = merge_values(stats, attribute, merge_map)?;
    let eval_fine = table_contribution(fine);
    let eval_merged = discrete_attribute_contribution(&merged_stats, attribute)?;

    let weights = fine.class_weights();
    let conditionals: Vec<Vec<f64>> = (0..fine.classes()).map(|i| fine.conditional(i)).collect();
    let marginal = fine.marginal();
    let values = fine.values();
    let mut cov_terms = Vec::new();
    for k in 0..values.len() {
        for l in (k + 1)..values.len() {
            let (ck, cl) = (&merge_map[&values[k]], &merge_map[&values[l]]);
            if ck != cl {
                continue;
            }
            let joint: f64 = weights
                .iter()
                .zip(&conditionals)
                .map(|(w, y)| w * y[k] * y[l])
                .sum();
            cov_terms.push(CovarianceTerm {
                first: values[k].clone(),
                second: values[l].clone(),
                coarse: ck.clone(),
                cov: joint - marginal[k] * marginal[l],
            });
        }
    }
    let cov_sum: f64 = cov_terms.iter().map(|t| t.cov).sum();
    Ok(CovarianceIdentity { eval_fine, eval_merged, residual: eval_fine - (eval_merged - 2.0 * cov_sum), cov_terms })
}
