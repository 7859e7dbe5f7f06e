//! Sufficient statistics of a partition: per-class value tallies for
//! discrete attributes and streaming moments for continuous ones.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Value};
use crate::eval::EvalError;
use crate::schema::AttributeKind;

/// Count, mean and sum of squared deviations of a stream of reals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    /// Moments of `count` observations with the given population mean and
    /// variance. Used to build exact analytic partitions.
    pub fn from_population(count: u64, mean: f64, variance: f64) -> Self {
        Self { count, mean, m2: variance * count as f64 }
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Combines two disjoint samples (Chan et al. parallel update).
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        Moments {
            count: self.count + other.count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    /// Population variance; zero for fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Class × value counts of one discrete attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    values: Vec<String>,
    /// `counts[class][value]`
    counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(values: Vec<String>, counts: Vec<Vec<u64>>) -> Self {
        assert!(counts.iter().all(|row| row.len() == values.len()), "ragged contingency table");
        Self { values, counts }
    }

    pub fn zeros(values: Vec<String>, classes: usize) -> Self {
        let k = values.len();
        Self { values, counts: vec![vec![0; k]; classes] }
    }

    /// Table with anonymous value names `v0..`.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let k = counts.first().map_or(0, Vec::len);
        Self::new((0..k).map(|i| format!("v{i}")).collect(), counts)
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn value_count(&self) -> usize {
        self.values.len()
    }

    pub fn add(&mut self, class: usize, value: usize) {
        self.counts[class][value] += 1;
    }

    /// Observed (non-missing) count per class.
    pub fn class_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    /// Marginal counts over all classes.
    pub fn root_counts(&self) -> Vec<u64> {
        let mut root = vec![0; self.values.len()];
        for row in &self.counts {
            for (r, c) in root.iter_mut().zip(row) {
                *r += c;
            }
        }
        root
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `p(A=v|C_i)` over observed entries; all zeros for a class without
    /// observations.
    pub fn conditional(&self, class: usize) -> Vec<f64> {
        let row = &self.counts[class];
        let n: u64 = row.iter().sum();
        if n == 0 {
            return vec![0.0; row.len()];
        }
        row.iter().map(|&c| c as f64 / n as f64).collect()
    }

    /// `p(A=v)` over observed entries.
    pub fn marginal(&self) -> Vec<f64> {
        let root = self.root_counts();
        let n: u64 = root.iter().sum();
        if n == 0 {
            return vec![0.0; root.len()];
        }
        root.iter().map(|&c| c as f64 / n as f64).collect()
    }

    /// Class weights restricted to observed entries of this attribute.
    pub fn class_weights(&self) -> Vec<f64> {
        let totals = self.class_totals();
        let n: u64 = totals.iter().sum();
        if n == 0 {
            return vec![0.0; totals.len()];
        }
        totals.iter().map(|&t| t as f64 / n as f64).collect()
    }

    /// Sums counts of values sharing a coarse value. `map[v]` is the coarse
    /// index of fine value `v`.
    pub fn merged(&self, coarse_values: Vec<String>, map: &[usize]) -> ContingencyTable {
        let mut counts = vec![vec![0; coarse_values.len()]; self.classes()];
        for (row, out) in self.counts.iter().zip(counts.iter_mut()) {
            for (v, &c) in row.iter().enumerate() {
                out[map[v]] += c;
            }
        }
        ContingencyTable { values: coarse_values, counts }
    }
}

/// Per-class moments of one continuous attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentColumn {
    pub per_class: Vec<Moments>,
}

impl MomentColumn {
    pub fn root(&self) -> Moments {
        self.per_class.iter().fold(Moments::default(), |acc, m| acc.merge(m))
    }

    pub fn class_weights(&self) -> Vec<f64> {
        let n: u64 = self.per_class.iter().map(|m| m.count).sum();
        if n == 0 {
            return vec![0.0; self.per_class.len()];
        }
        self.per_class.iter().map(|m| m.count as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnStats {
    Discrete(ContingencyTable),
    Continuous(MomentColumn),
}

/// Tallies of one partition of a record set into `M` classes.
///
/// Root (whole-partition) statistics are always derived from the class
/// statistics, so root counts equal the sum over classes by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStats {
    names: Vec<String>,
    class_counts: Vec<u64>,
    columns: Vec<ColumnStats>,
}

/// Whether [`collect_stats_with`] accepts classes without records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyClassPolicy {
    Reject,
    Allow,
}

impl PartitionStats {
    pub fn from_parts(
        names: Vec<String>,
        class_counts: Vec<u64>,
        columns: Vec<ColumnStats>,
    ) -> Result<Self, EvalError> {
        if names.len() != columns.len() {
            return Err(EvalError::Inconsistent("one name per column required".into()));
        }
        let m = class_counts.len();
        if m == 0 {
            return Err(EvalError::Inconsistent("a partition needs at least one class".into()));
        }
        for (name, col) in names.iter().zip(&columns) {
            let (classes, totals): (usize, Vec<u64>) = match col {
                ColumnStats::Discrete(t) => (t.classes(), t.class_totals()),
                ColumnStats::Continuous(c) => (c.per_class.len(), c.per_class.iter().map(|m| m.count).collect()),
            };
            if classes != m {
                return Err(EvalError::Inconsistent(format!("column {name:?} has {classes} classes, expected {m}")));
            }
            if totals.iter().zip(&class_counts).any(|(t, c)| t > c) {
                return Err(EvalError::Inconsistent(format!(
                    "column {name:?} observes more entries than its class holds"
                )));
            }
        }
        Ok(Self { names, class_counts, columns })
    }

    pub fn classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }

    pub fn total(&self) -> u64 {
        self.class_counts.iter().sum()
    }

    /// `p(C_i)` as count ratios.
    pub fn class_mass(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.class_counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[ColumnStats] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&ColumnStats, EvalError> {
        self.column_index(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| EvalError::UnknownAttribute(name.to_string()))
    }

    pub fn discrete(&self, name: &str) -> Result<&ContingencyTable, EvalError> {
        match self.column(name)? {
            ColumnStats::Discrete(t) => Ok(t),
            ColumnStats::Continuous(_) => Err(EvalError::NotDiscrete(name.to_string())),
        }
    }

    pub fn discrete_tables(&self) -> impl Iterator<Item = &ContingencyTable> {
        self.columns.iter().filter_map(|c| match c {
            ColumnStats::Discrete(t) => Some(t),
            ColumnStats::Continuous(_) => None,
        })
    }

    pub fn continuous_columns(&self) -> impl Iterator<Item = &MomentColumn> {
        self.columns.iter().filter_map(|c| match c {
            ColumnStats::Continuous(m) => Some(m),
            ColumnStats::Discrete(_) => None,
        })
    }

    /// Keeps only the columns at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PartitionStats {
        PartitionStats {
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            class_counts: self.class_counts.clone(),
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }

    /// Replaces one column, keeping the rest untouched.
    pub fn with_column(&self, name: &str, column: ColumnStats) -> Result<PartitionStats, EvalError> {
        let i = self.column_index(name).ok_or_else(|| EvalError::UnknownAttribute(name.to_string()))?;
        let mut out = self.clone();
        out.columns[i] = column;
        Ok(out)
    }

    /// Applies an affine map `x → a·x + b` to a continuous column's moments.
    pub fn affine(&self, name: &str, a: f64, b: f64) -> Result<PartitionStats, EvalError> {
        let col = match self.column(name)? {
            ColumnStats::Continuous(c) => c,
            ColumnStats::Discrete(_) => return Err(EvalError::NotContinuous(name.to_string())),
        };
        let per_class = col
            .per_class
            .iter()
            .map(|m| Moments { count: m.count, mean: a * m.mean + b, m2: a * a * m.m2 })
            .collect();
        self.with_column(name, ColumnStats::Continuous(MomentColumn { per_class }))
    }
}

/// Tallies `dataset` under `assignment` (one class index per record),
/// with `M` = largest index + 1 and empty classes rejected.
pub fn collect_stats(dataset: &Dataset, assignment: &[usize]) -> Result<PartitionStats, EvalError> {
    let m = assignment.iter().max().map_or(1, |&c| c + 1);
    collect_stats_with(dataset, assignment, m, EmptyClassPolicy::Reject)
}

pub fn collect_stats_with(
    dataset: &Dataset,
    assignment: &[usize],
    classes: usize,
    policy: EmptyClassPolicy,
) -> Result<PartitionStats, EvalError> {
    if assignment.len() != dataset.len() {
        return Err(EvalError::Inconsistent(format!(
            "{} class indices for {} records",
            assignment.len(),
            dataset.len()
        )));
    }
    if classes == 0 {
        return Err(EvalError::Inconsistent("a partition needs at least one class".into()));
    }
    if let Some(&bad) = assignment.iter().find(|&&c| c >= classes) {
        return Err(EvalError::Inconsistent(format!("class index {bad} out of range for {classes} classes")));
    }
    let mut class_counts = vec![0u64; classes];
    for &c in assignment {
        class_counts[c] += 1;
    }
    if policy == EmptyClassPolicy::Reject {
        if let Some(empty) = class_counts.iter().position(|&c| c == 0) {
            return Err(EvalError::EmptyClass(empty));
        }
    }

    let schema = dataset.schema();
    let mut columns: Vec<ColumnStats> = schema
        .attributes()
        .iter()
        .map(|a| match &a.kind {
            AttributeKind::Discrete(values) => ColumnStats::Discrete(ContingencyTable::zeros(values.clone(), classes)),
            AttributeKind::Continuous => {
                ColumnStats::Continuous(MomentColumn { per_class: vec![Moments::default(); classes] })
            }
        })
        .collect();
    for (record, &class) in dataset.records().iter().zip(assignment) {
        for (value, column) in record.values.iter().zip(columns.iter_mut()) {
            match (value, column) {
                (Value::Discrete(v), ColumnStats::Discrete(t)) => t.add(class, *v),
                (Value::Continuous(x), ColumnStats::Continuous(c)) => c.per_class[class].push(*x),
                _ => {}
            }
        }
    }
    PartitionStats::from_parts(schema.names().map(str::to_string).collect(), class_counts, columns)
}

/// Merges values of a discrete attribute through `merge_map` (fine value
/// name → coarse value name). Coarse values keep first-appearance order.
pub fn merge_values(
    stats: &PartitionStats,
    attribute: &str,
    merge_map: &std::collections::BTreeMap<String, String>,
) -> Result<PartitionStats, EvalError> {
    let table = stats.discrete(attribute)?;
    let mut coarse: Vec<String> = Vec::new();
    let mut map = Vec::with_capacity(table.value_count());
    for v in table.values() {
        let target = merge_map
            .get(v)
            .ok_or_else(|| EvalError::PartialMergeMap { attribute: attribute.to_string(), value: v.clone() })?;
        let pos = coarse.iter().position(|c| c == target).unwrap_or_else(|| {
            coarse.push(target.clone());
            coarse.len() - 1
        });
        map.push(pos);
    }
    stats.with_column(attribute, ColumnStats::Discrete(table.merged(coarse, &map)))
}
