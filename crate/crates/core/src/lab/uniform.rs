//! Ideal uniform partitions: every attribute spreads uniformly over an
//! interval and each class owns an equal, disjoint slice of it.

use serde::{Deserialize, Serialize};

use super::{Check, ExperimentReport, LabError};
use crate::eval::{gennari_eval, scalefree_eval, DEFAULT_ACUITY};
use crate::stats::{ColumnStats, MomentColumn, Moments, PartitionStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformParams {
    pub classes: usize,
    pub deltas: Vec<f64>,
}

impl UniformParams {
    fn validate(&self) -> Result<(), LabError> {
        if self.classes < 2 {
            return Err(LabError::InvalidSpec(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(LabError::InvalidSpec("interval lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Exact statistics of the ideal partition: class `i` of attribute `j`
/// is uniform on `[iΔ_j/M, (i+1)Δ_j/M)`, so its σ is `Δ_j/(2√3·M)`. Root
/// moments come from merging the classes, not from a closed form.
pub fn ideal_uniform_stats(params: &UniformParams) -> Result<PartitionStats, LabError> {
    params.validate()?;
    let m = params.classes;
    let columns = params
        .deltas
        .iter()
        .map(|&delta| {
            let width = delta / m as f64;
            ColumnStats::Continuous(MomentColumn {
                per_class: (0..m)
                    .map(|i| Moments::from_population(1, width * (i as f64 + 0.5), width * width / 12.0))
                    .collect(),
            })
        })
        .collect();
    Ok(PartitionStats::from_parts(
        (1..=params.deltas.len()).map(|j| format!("a{j}")).collect(),
        vec![1; m],
        columns,
    )?)
}

/// `(M−1)·2√3/M·Σ_j 1/Δ_j`.
pub fn expected_gennari(params: &UniformParams) -> f64 {
    let m = params.classes as f64;
    (m - 1.0) * 2.0 * 3f64.sqrt() / m * params.deltas.iter().map(|d| 1.0 / d).sum::<f64>()
}

pub fn uniform_ideal_experiment(params: &UniformParams) -> Result<ExperimentReport, LabError> {
    let stats = ideal_uniform_stats(params)?;
    let gennari = gennari_eval(&stats, DEFAULT_ACUITY)?;
    let scalefree = scalefree_eval(&stats, DEFAULT_ACUITY)?;
    let expected_g = expected_gennari(params);
    let expected_s = params.classes as f64 - 1.0;

    let mut report = ExperimentReport::new("uniform", params);
    report.scalar("gennari", gennari);
    report.scalar("scalefree", scalefree);
    report.scalar("expected_gennari", expected_g);
    report.scalar("expected_scalefree", expected_s);
    report.check("gennari", Check::relative(gennari, expected_g, 1e-9));
    report.check("scalefree", Check::absolute(scalefree, expected_s, 1e-9));
    Ok(report)
}
