//! Asymmetric evaluation: predicting attributes are scored by how well
//! they predict the class, predicted attributes by how well the class
//! predicts them, each relative to the previous incorporation step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Aggregator, AsymmetricConfig, EvalError};
use crate::schema::Schema;
use crate::stats::{ColumnStats, ContingencyTable, PartitionStats};

/// Fine-precision copy of an attribute used to predict the class.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictingAttribute {
    pub name: String,
    pub table: ContingencyTable,
    pub availability: f64,
}

/// Coarse copy of an attribute predicted from the class.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedAttribute {
    pub name: String,
    pub table: ContingencyTable,
    pub weight: f64,
}

/// Name of the predicting copy of an attribute with role `both`.
pub fn predicting_name(name: &str) -> String {
    format!("{name}'")
}

/// Name of the predicted copy of an attribute with role `both`.
pub fn predicted_name(name: &str) -> String {
    format!("{name}''")
}

/// Partition statistics split by role. Attributes with role `both` appear
/// twice: full precision on the predicting side, coarsened through their
/// `predicted_grid` on the predicted side. Continuous attributes are left
/// out; discretize them first.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleSplit {
    pub classes: usize,
    pub predicting: Vec<PredictingAttribute>,
    pub predicted: Vec<PredictedAttribute>,
}

impl RoleSplit {
    /// Availability is the declared one or, when absent, the observed
    /// fraction of the partition's records.
    pub fn new(stats: &PartitionStats, schema: &Schema) -> Result<Self, EvalError> {
        let total = stats.total() as f64;
        let availability: Vec<f64> = schema
            .attributes()
            .iter()
            .map(|a| {
                a.availability.unwrap_or_else(|| match stats.column(&a.name) {
                    Ok(ColumnStats::Discrete(t)) if total > 0.0 => t.total() as f64 / total,
                    _ => 0.0,
                })
            })
            .collect();
        Self::with_availability(stats, schema, &availability)
    }

    /// `availability` holds one entry per schema attribute.
    pub fn with_availability(stats: &PartitionStats, schema: &Schema, availability: &[f64]) -> Result<Self, EvalError> {
        let mut predicting = Vec::new();
        let mut predicted = Vec::new();
        for (attr, &avail) in schema.attributes().iter().zip(availability) {
            if !attr.is_discrete() {
                continue;
            }
            let table = match stats.column(&attr.name) {
                Ok(ColumnStats::Discrete(t)) => t,
                Ok(ColumnStats::Continuous(_)) => return Err(EvalError::NotDiscrete(attr.name.clone())),
                Err(_) => continue,
            };
            let both = attr.role.is_predicting() && attr.role.is_predicted();
            if attr.role.is_predicting() {
                predicting.push(PredictingAttribute {
                    name: if both { predicting_name(&attr.name) } else { attr.name.clone() },
                    table: table.clone(),
                    availability: avail,
                });
            }
            if attr.role.is_predicted() {
                let (coarse, map) = attr.coarse_grid();
                predicted.push(PredictedAttribute {
                    name: if both { predicted_name(&attr.name) } else { attr.name.clone() },
                    table: table.merged(coarse, &map),
                    weight: attr.weight,
                });
            }
        }
        Ok(Self { classes: stats.classes(), predicting, predicted })
    }
}

/// `f_A`: value → class maximizing `p(C = f_A(A))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueToClass {
    pub attribute: String,
    pub map: Vec<usize>,
    /// Values never observed in the partition; mapped to the modal class.
    pub unseen: Vec<bool>,
    /// `p(C = f_A(A))` over observed entries.
    pub accuracy: f64,
}

/// `g_A`: class → value maximizing `p(A = g_A(C))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassToValue {
    pub attribute: String,
    pub map: Vec<usize>,
    /// Classes without observations; mapped to the modal value.
    pub unseen: Vec<bool>,
    /// `p(A = g_A(C))` over observed entries.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorMaps {
    pub f: Vec<ValueToClass>,
    pub g: Vec<ClassToValue>,
}

/// Index of the first maximum.
fn argmax(values: impl IntoIterator<Item = u64>) -> (usize, u64) {
    values
        .into_iter()
        .enumerate()
        .fold((0, 0), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) })
}

/// Best value → class map of a table and its accuracy.
pub fn predicting_accuracy(table: &ContingencyTable) -> (Vec<usize>, Vec<bool>, f64) {
    let counts = table.counts();
    let (modal_class, _) = argmax(table.class_totals());
    let mut hits = 0u64;
    let mut map = Vec::with_capacity(table.value_count());
    let mut unseen = Vec::with_capacity(table.value_count());
    for v in 0..table.value_count() {
        let (best, count) = argmax(counts.iter().map(|row| row[v]));
        if count == 0 {
            map.push(modal_class);
            unseen.push(true);
        } else {
            map.push(best);
            unseen.push(false);
            hits += count;
        }
    }
    let n = table.total();
    (map, unseen, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
}

/// Best class → value map of a table and its accuracy.
pub fn predicted_accuracy(table: &ContingencyTable) -> (Vec<usize>, Vec<bool>, f64) {
    let (modal_value, _) = argmax(table.root_counts());
    let mut hits = 0u64;
    let mut map = Vec::with_capacity(table.classes());
    let mut unseen = Vec::with_capacity(table.classes());
    for row in table.counts() {
        let (best, count) = argmax(row.iter().copied());
        if count == 0 {
            map.push(modal_value);
            unseen.push(true);
        } else {
            map.push(best);
            unseen.push(false);
            hits += count;
        }
    }
    let n = table.total();
    (map, unseen, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
}

pub fn build_predictors(split: &RoleSplit) -> PredictorMaps {
    let f = split
        .predicting
        .iter()
        .map(|a| {
            let (map, unseen, accuracy) = predicting_accuracy(&a.table);
            ValueToClass { attribute: a.name.clone(), map, unseen, accuracy }
        })
        .collect();
    let g = split
        .predicted
        .iter()
        .map(|a| {
            let (map, unseen, accuracy) = predicted_accuracy(&a.table);
            ClassToValue { attribute: a.name.clone(), map, unseen, accuracy }
        })
        .collect();
    PredictorMaps { f, g }
}

/// Undivided quantities of the previous step, used as denominators.
///
/// Only strictly positive quantities are stored; a missing entry means a
/// unit denominator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMemory {
    pub prev_predicted: BTreeMap<String, f64>,
    pub prev_predicting_best: Option<f64>,
}

/// Combines predicting-attribute values with the configured aggregator.
pub fn aggregate(values: &[f64], aggregator: Aggregator) -> f64 {
    match aggregator {
        Aggregator::Max => values.iter().copied().fold(0.0, f64::max),
        Aggregator::TopN { n } => {
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let take = n.min(sorted.len());
            if take == 0 {
                0.0
            } else {
                sorted[..take].iter().sum::<f64>() / take as f64
            }
        }
    }
}

/// Raw (undivided) quantities of one asymmetric evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricTerms {
    /// `(name, weight, p(A=g_A(C)))` per predicted attribute.
    pub predicted: Vec<(String, f64, f64)>,
    /// `AGG_A(p(A available)·p(C=f_A(A)))`.
    pub predicting_best: f64,
}

impl AsymmetricTerms {
    /// Scores the terms against `memory` and returns the next memory.
    pub fn score(&self, memory: Option<&StepMemory>, class_weight: f64) -> (f64, StepMemory) {
        let mut score = 0.0;
        let mut next = StepMemory::default();
        for (name, weight, accuracy) in &self.predicted {
            let denom = memory.and_then(|m| m.prev_predicted.get(name)).copied().unwrap_or(1.0);
            score += weight * accuracy / denom;
            if *accuracy > 0.0 {
                next.prev_predicted.insert(name.clone(), *accuracy);
            }
        }
        let denom = memory.and_then(|m| m.prev_predicting_best).unwrap_or(1.0);
        score += class_weight * self.predicting_best / denom;
        if self.predicting_best > 0.0 {
            next.prev_predicting_best = Some(self.predicting_best);
        }
        (score, next)
    }
}

/// `Σ_{A∈Prtd} w_A p(A=g_A(C))/p'(A=g'_A(C)) + w_C AGG_A(avail_A p(C=f_A(A))) / AGG'`.
///
/// Without memory every denominator is one.
pub fn asymmetric_eval(
    split: &RoleSplit,
    maps: &PredictorMaps,
    memory: Option<&StepMemory>,
    config: &AsymmetricConfig,
) -> Result<(f64, StepMemory), EvalError> {
    if split.predicted.is_empty() {
        return Err(EvalError::EmptyPredictedSet);
    }
    if split.predicting.is_empty() {
        return Err(EvalError::EmptyPredictingSet);
    }
    if maps.f.len() != split.predicting.len() || maps.g.len() != split.predicted.len() {
        return Err(EvalError::Inconsistent("predictor maps do not match the role split".into()));
    }
    let predicted = split
        .predicted
        .iter()
        .zip(&maps.g)
        .map(|(a, g)| (a.name.clone(), a.weight, g.accuracy))
        .collect();
    let values: Vec<f64> = split
        .predicting
        .iter()
        .zip(&maps.f)
        .map(|(a, f)| a.availability * f.accuracy)
        .collect();
    let terms = AsymmetricTerms { predicted, predicting_best: aggregate(&values, config.aggregator) };
    Ok(terms.score(memory, config.class_weight))
}

/// Builds the role split and predictor maps from `stats` and scores them.
pub fn asymmetric_eval_stats(
    stats: &PartitionStats,
    schema: &Schema,
    memory: Option<&StepMemory>,
    config: &AsymmetricConfig,
) -> Result<(f64, StepMemory), EvalError> {
    let split = RoleSplit::new(stats, schema)?;
    let maps = build_predictors(&split);
    asymmetric_eval(&split, &maps, memory, config)
}
