//! Seeded synthetic datasets for the pathology experiments.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{DataError, Dataset, Record, Value};
use crate::schema::{AttributeSchema, Role, Schema};

/// Generator used for every seeded draw in the crate.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

/// Name of the hidden class label column emitted by labelled generators.
pub const CLASS_COLUMN: &str = "class";

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Generator {
    /// Each class owns a disjoint subinterval of length `Δ_j·p(C_i)` of
    /// every attribute's domain `[0, Δ_j)`.
    IdealUniform {
        classes: usize,
        deltas: Vec<f64>,
        n: usize,
        /// Class masses; equal when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class_mass: Option<Vec<f64>>,
    },
    /// Two neighbouring uniform intervals `[-b, 0)` and `[0, a)` with
    /// densities `d1` and `d2`.
    TwoDensity { b: f64, a: f64, d1: f64, d2: f64, n: usize },
    BivariateNormal { mu_x: f64, mu_y: f64, sigma_x: f64, sigma_y: f64, r: f64, n: usize },
    /// `k` binary attributes plus a label correlated with them.
    BooleanDiagnostic { k: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub generator: Generator,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(generator: Generator, seed: u64) -> Self {
        Self { generator, seed }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let invalid = |m: &str| Err(DataError::InvalidSpec(m.to_string()));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match &self.generator {
            Generator::IdealUniform { classes, deltas, n, class_mass } => {
                if *classes < 2 {
                    return invalid("ideal uniform needs at least 2 classes");
                }
                if deltas.is_empty() || !deltas.iter().all(|d| positive(*d)) {
                    return invalid("interval lengths must be positive");
                }
                if *n < 1 {
                    return invalid("n must be at least 1");
                }
                if let Some(mass) = class_mass {
                    if mass.len() != *classes || !mass.iter().all(|m| positive(*m)) {
                        return invalid("class_mass needs one positive entry per class");
                    }
                }
            }
            Generator::TwoDensity { b, a, d1, d2, n } => {
                if ![*b, *a, *d1, *d2].iter().all(|x| positive(*x)) {
                    return invalid("lengths and densities must be positive");
                }
                if *n < 1 {
                    return invalid("n must be at least 1");
                }
            }
            Generator::BivariateNormal { mu_x, mu_y, sigma_x, sigma_y, r, n } => {
                if !mu_x.is_finite() || !mu_y.is_finite() || !positive(*sigma_x) || !positive(*sigma_y) {
                    return invalid("means must be finite and standard deviations positive");
                }
                if !(r.abs() < 1.0) {
                    return invalid("correlation must satisfy |R| < 1");
                }
                if *n < 1 {
                    return invalid("n must be at least 1");
                }
            }
            Generator::BooleanDiagnostic { k, n } => {
                if !(1..=16).contains(k) {
                    return invalid("boolean diagnostic needs 1..=16 attributes");
                }
                if *n < 1 {
                    return invalid("n must be at least 1");
                }
            }
        }
        Ok(())
    }
}

fn class_attribute(classes: usize) -> AttributeSchema {
    AttributeSchema::discrete(CLASS_COLUMN, (1..=classes).map(|i| format!("c{i}"))).with_role(Role::Predicted)
}

/// Draws the dataset described by `spec`. A pure function of `spec`,
/// seed included.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    match &spec.generator {
        Generator::IdealUniform { classes, deltas, n, class_mass } => {
            let mass = class_mass.clone().unwrap_or_else(|| vec![1.0; *classes]);
            let total: f64 = mass.iter().sum();
            let mut cum = Vec::with_capacity(classes + 1);
            cum.push(0.0);
            for m in &mass {
                cum.push(cum.last().unwrap() + m / total);
            }
            *cum.last_mut().unwrap() = 1.0;
            let picker = WeightedIndex::new(&mass).map_err(|e| DataError::InvalidSpec(e.to_string()))?;

            let mut attrs = vec![class_attribute(*classes)];
            attrs.extend((1..=deltas.len()).map(|j| AttributeSchema::continuous(format!("a{j}"))));
            let records = (0..*n)
                .map(|_| {
                    let c = picker.sample(&mut rng);
                    let mut values = vec![Value::Discrete(c)];
                    for d in deltas {
                        let (lo, hi) = (d * cum[c], d * cum[c + 1]);
                        let mut x = lo + rng.random::<f64>() * (hi - lo);
                        if x >= hi {
                            x = lo;
                        }
                        values.push(Value::Continuous(x));
                    }
                    Record::new(values)
                })
                .collect();
            Dataset::new(Schema::new(attrs)?, records)
        }
        Generator::TwoDensity { b, a, d1, d2, n } => {
            let p_first = d1 * b / (d1 * b + d2 * a);
            let attrs = vec![class_attribute(2), AttributeSchema::continuous("x")];
            let records = (0..*n)
                .map(|_| {
                    let u: f64 = rng.random();
                    let (c, x) = if rng.random::<f64>() < p_first { (0, -b + u * b) } else { (1, u * a) };
                    Record::new(vec![Value::Discrete(c), Value::Continuous(x)])
                })
                .collect();
            Dataset::new(Schema::new(attrs)?, records)
        }
        Generator::BivariateNormal { mu_x, mu_y, sigma_x, sigma_y, r, n } => {
            let attrs = vec![AttributeSchema::continuous("x"), AttributeSchema::continuous("y")];
            let tail = (1.0 - r * r).sqrt();
            let records = (0..*n)
                .map(|_| {
                    let z1: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    Record::new(vec![
                        Value::Continuous(mu_x + sigma_x * z1),
                        Value::Continuous(mu_y + sigma_y * (r * z1 + tail * z2)),
                    ])
                })
                .collect();
            Dataset::new(Schema::new(attrs)?, records)
        }
        Generator::BooleanDiagnostic { k, n } => {
            let mut attrs: Vec<AttributeSchema> =
                (1..=*k).map(|j| AttributeSchema::discrete(format!("b{j}"), ["0", "1"])).collect();
            attrs.push(AttributeSchema::discrete(CLASS_COLUMN, ["0", "1"]).with_role(Role::Predicted));
            let mut patterns: Vec<u32> = (0..1u32 << k).collect();
            patterns.shuffle(&mut rng);
            let records = (0..*n)
                .map(|i| {
                    let p = patterns[i % patterns.len()];
                    let ones = p.count_ones() as usize;
                    let majority = if 2 * ones == *k { p & 1 == 1 } else { 2 * ones > *k };
                    let label = majority ^ (rng.random::<f64>() < 0.1);
                    let mut values: Vec<Value> = (0..*k).map(|j| Value::Discrete(((p >> j) & 1) as usize)).collect();
                    values.push(Value::Discrete(label as usize));
                    Record::new(values)
                })
                .collect();
            Dataset::new(Schema::new(attrs)?, records)
        }
    }
}
