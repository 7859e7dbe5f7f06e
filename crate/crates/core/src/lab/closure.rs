//! Boolean closure of binary columns. Once every boolean function of the
//! base attributes is present, any two distinguishable objects agree on
//! exactly half of the columns and the Fisher hierarchy isolates each one.

use serde::{Deserialize, Serialize};

use super::{Check, ExperimentReport, LabError};
use crate::data::{clustering_attributes, Dataset, Record, Value};
use crate::eval::{EvalConfig, Variant};
use crate::schema::{AttributeSchema, Schema};
use crate::tree::ConceptTree;

/// Objects are bit positions in a `u32` column mask; the closure of `m`
/// objects can hold up to `2^m` columns.
pub const MAX_OBJECTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureResult {
    pub objects: usize,
    /// Distinct base columns.
    pub base_columns: usize,
    /// Closed columns as masks (bit `o` is object `o`'s value), ascending.
    pub columns: Vec<u32>,
    /// `agreement[i][j]`: closed columns where objects `i` and `j` agree.
    pub agreement: Vec<Vec<usize>>,
    /// Agreement is the same for every pair of distinguishable objects.
    pub uniform: bool,
}

impl ClosureResult {
    pub fn closed_columns(&self) -> usize {
        self.columns.len()
    }
}

fn mask_of(column: &[u8], index: usize) -> Result<u32, LabError> {
    column.iter().enumerate().try_fold(0u32, |acc, (o, &v)| match v {
        0 => Ok(acc),
        1 => Ok(acc | (1 << o)),
        _ => Err(LabError::NonBinaryColumn(index)),
    })
}

/// Closes `columns` (each one value per object, 0 or 1) under negation,
/// conjunction and disjunction, deduplicating identical column vectors.
///
/// The closure is built from its atoms: the conjunction of literals that
/// holds for one object is the smallest closed column containing it, and
/// every closed column is a disjunction of atoms.
pub fn boolean_closure(columns: &[Vec<u8>], drop_constants: bool) -> Result<ClosureResult, LabError> {
    let m = columns.first().map_or(0, Vec::len);
    if columns.is_empty() {
        return Err(LabError::InvalidSpec("closure needs at least one column".into()));
    }
    if !(2..=MAX_OBJECTS).contains(&m) {
        return Err(LabError::InvalidSpec(format!("closure needs 2 to {MAX_OBJECTS} objects, got {m}")));
    }
    if let Some(i) = columns.iter().position(|c| c.len() != m) {
        return Err(LabError::InvalidSpec(format!("column {i} has {} entries, expected {m}", columns[i].len())));
    }
    let full: u32 = (1 << m) - 1;
    let mut base = columns.iter().enumerate().map(|(i, c)| mask_of(c, i)).collect::<Result<Vec<_>, _>>()?;
    base.sort_unstable();
    base.dedup();

    let atom_of = |o: usize| base.iter().fold(full, |acc, &c| acc & if c >> o & 1 == 1 { c } else { !c & full });
    let mut atoms: Vec<u32> = Vec::new();
    for o in 0..m {
        let a = atom_of(o);
        if !atoms.contains(&a) {
            atoms.push(a);
        }
    }
    let mut closed: Vec<u32> = (0u64..1 << atoms.len())
        .map(|subset| {
            atoms.iter().enumerate().filter(|(k, _)| subset >> k & 1 == 1).fold(0, |acc, (_, &a)| acc | a)
        })
        .filter(|&c| !drop_constants || (c != 0 && c != full))
        .collect();
    closed.sort_unstable();

    let agreement: Vec<Vec<usize>> = (0..m)
        .map(|i| (0..m).map(|j| closed.iter().filter(|&&c| (c >> i & 1) == (c >> j & 1)).count()).collect())
        .collect();
    let signatures: Vec<u32> = (0..m).map(atom_of).collect();
    let mut distinct = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).filter(|&(i, j)| signatures[i] != signatures[j]);
    let uniform = match distinct.next() {
        None => true,
        Some((i, j)) => {
            let first = agreement[i][j];
            distinct.all(|(i, j)| agreement[i][j] == first)
        }
    };
    Ok(ClosureResult { objects: m, base_columns: base.len(), columns: closed, agreement, uniform })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ClosureParams {
    /// Leave out the always-true and always-false columns.
    pub drop_constants: bool,
}

fn binary_dataset(columns: &[u32], objects: usize) -> Dataset {
    let schema = Schema::new(
        (0..columns.len()).map(|k| AttributeSchema::discrete(format!("f{k}"), ["0", "1"])).collect(),
    )
    .expect("generated names are unique");
    let records = (0..objects)
        .map(|o| Record::new(columns.iter().map(|&c| Value::Discrete((c >> o & 1) as usize)).collect()))
        .collect();
    Dataset::new(schema, records).expect("generated records conform")
}

/// Top-level class of every object.
fn top_level(tree: &ConceptTree) -> Vec<usize> {
    tree.instance_paths().into_iter().map(|p| p.first().copied().unwrap_or(0)).collect()
}

/// Pairs placed inconsistently: identical objects in different top-level
/// classes, or distinct objects sharing one.
fn misplaced_pairs(classes: &[usize], signatures: &[u32]) -> usize {
    let m = classes.len();
    (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .filter(|&(i, j)| (classes[i] == classes[j]) != (signatures[i] == signatures[j]))
        .count()
}

/// Closes the dataset's non-predicted binary attributes, checks that all
/// distinguishable objects become equally similar, then fits a Fisher
/// hierarchy on the closed data and checks that its top level separates
/// exactly the distinguishable objects. A control arm fits the base
/// columns and is reported without assertion.
pub fn closure_degeneration_check(dataset: &Dataset, params: ClosureParams) -> Result<ExperimentReport, LabError> {
    let schema = dataset.schema();
    let attrs = clustering_attributes(schema);
    let mut columns = Vec::with_capacity(attrs.len());
    for &j in &attrs {
        let attr = schema.get(j);
        if attr.values().len() != 2 {
            return Err(LabError::NonBinaryColumn(j));
        }
        let column = dataset
            .records()
            .iter()
            .map(|r| match r.values[j] {
                Value::Discrete(v) => Ok(v as u8),
                _ => Err(LabError::InvalidSpec(format!("attribute {:?} has missing entries", attr.name))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        columns.push(column);
    }
    let result = boolean_closure(&columns, params.drop_constants)?;
    if result.columns.is_empty() {
        return Err(LabError::InvalidSpec("no columns left once constants are dropped".into()));
    }
    let m = result.objects;

    // ids[o]: first object with the same base row as o
    let rows: Vec<Vec<u8>> = (0..m).map(|o| columns.iter().map(|c| c[o]).collect()).collect();
    let mut ids: Vec<u32> = Vec::with_capacity(m);
    for o in 0..m {
        let id = (0..o).find(|&p| rows[p] == rows[o]).map_or(o as u32, |p| ids[p]);
        ids.push(id);
    }
    let distinct_objects = {
        let mut d = ids.clone();
        d.sort_unstable();
        d.dedup();
        d.len()
    };

    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let distinct: Vec<usize> =
        pairs.iter().filter(|&&(i, j)| ids[i] != ids[j]).map(|&(i, j)| result.agreement[i][j]).collect();
    let identical: Vec<usize> =
        pairs.iter().filter(|&&(i, j)| ids[i] == ids[j]).map(|&(i, j)| result.agreement[i][j]).collect();
    // both constants agree on every pair
    let expected = (1u64 << (distinct_objects - 1)) as f64 - if params.drop_constants { 2.0 } else { 0.0 };
    let (lo, hi) = distinct.iter().fold((usize::MAX, 0), |(lo, hi), &a| (lo.min(a), hi.max(a)));

    let fisher = EvalConfig::new(Variant::Fisher);
    let closed_tree = ConceptTree::fit(&binary_dataset(&result.columns, m), fisher)?;
    let base_masks: Vec<u32> = columns.iter().map(|c| c.iter().enumerate().fold(0, |a, (o, &v)| a | (u32::from(v) << o))).collect();
    let control_tree = ConceptTree::fit(&binary_dataset(&base_masks, m), fisher)?;
    let closed_classes = top_level(&closed_tree);
    let control_classes = top_level(&control_tree);
    let count_classes = |c: &[usize]| c.iter().max().map_or(0, |x| x + 1) as f64;

    let mut report = ExperimentReport::new("closure", params);
    report.scalar("objects", m as f64);
    report.scalar("distinct_objects", distinct_objects as f64);
    report.scalar("base_columns", result.base_columns as f64);
    report.scalar("closed_columns", result.closed_columns() as f64);
    report.scalar("agreement_expected", expected);
    report.scalar("closed_top_level_classes", count_classes(&closed_classes));
    report.scalar("control_top_level_classes", count_classes(&control_classes));
    report.scalar("control_misplaced_pairs", misplaced_pairs(&control_classes, &ids) as f64);
    if !distinct.is_empty() {
        report.scalar("agreement_distinct_min", lo as f64);
        report.scalar("agreement_distinct_max", hi as f64);
        report.check("uniform", Check::absolute((hi - lo) as f64, 0.0, 0.0));
        report.check("agreement", Check::absolute(lo as f64, expected, 0.0));
    }
    let diagonal_min = (0..m).map(|i| result.agreement[i][i]).min().unwrap_or(0);
    report.check("diagonal", Check::absolute(diagonal_min as f64, result.closed_columns() as f64, 0.0));
    if let Some(&min_identical) = identical.iter().min() {
        report.check("identical", Check::absolute(min_identical as f64, result.closed_columns() as f64, 0.0));
    }
    report.check("singletons", Check::absolute(misplaced_pairs(&closed_classes, &ids) as f64, 0.0, 0.0));
    report.series.insert(
        "agreement".into(),
        pairs.iter().map(|&(i, j)| ((i * m + j) as f64, result.agreement[i][j] as f64)).collect(),
    );
    Ok(report)
}
