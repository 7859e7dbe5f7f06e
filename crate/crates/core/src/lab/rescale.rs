//! Value merging and non-informative splitting: a discrete attribute whose
//! values are split at random, independently of the class, still gains
//! score, because every covariance between merged siblings is negative.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::{Check, ExperimentReport, LabError};
use crate::eval::{covariance_identity, table_contribution};
use crate::stats::{merge_values, ColumnStats, ContingencyTable, PartitionStats};
use crate::synth::seeded_rng;

/// How a coarse count is shared among the fine values that merge into it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SplitModel {
    /// Proportions drawn uniformly from the simplex, per class and value.
    Uniform,
    /// The first fine value takes `p`; the others share the rest evenly.
    Fixed { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleParams {
    pub trials: usize,
    pub seed: u64,
    pub split: SplitModel,
}

impl Default for RescaleParams {
    fn default() -> Self {
        Self { trials: 1000, seed: 0, split: SplitModel::Uniform }
    }
}

/// Pairs the `k`-th value with the `k`-th from the end: `v1+v6 → w1`,
/// `v2+v5 → w2`, `v3+v4 → w3` for six values.
pub fn pairing_merge_map(values: &[String]) -> Result<BTreeMap<String, String>, LabError> {
    let n = values.len();
    if n == 0 || n % 2 != 0 {
        return Err(LabError::InvalidSpec(format!("pairing needs an even number of values, got {n}")));
    }
    Ok(values.iter().enumerate().map(|(k, v)| (v.clone(), format!("w{}", k.min(n - 1 - k) + 1))).collect())
}

/// A 6-valued attribute `A` (`v1`..`v6`) over three classes with counts
/// drawn from `0..=20`; every class is non-empty.
pub fn random_stats(seed: u64) -> PartitionStats {
    let mut rng = seeded_rng(seed);
    let counts: Vec<Vec<u64>> = (0..3)
        .map(|_| {
            let mut row: Vec<u64> = (0..6).map(|_| rng.random_range(0..=20)).collect();
            row[rng.random_range(0..6)] += 1;
            row
        })
        .collect();
    let class_counts = counts.iter().map(|r| r.iter().sum()).collect();
    let values = (1..=6).map(|k| format!("v{k}")).collect();
    PartitionStats::from_parts(
        vec!["A".into()],
        class_counts,
        vec![ColumnStats::Discrete(ContingencyTable::new(values, counts))],
    )
    .expect("one non-empty discrete column")
}

/// Shares `count` among `parts` fine values: proportions first, then
/// counts by sequential binomials conditioned on what is left.
fn split_count(count: u64, parts: usize, model: SplitModel, rng: &mut impl Rng) -> Vec<u64> {
    let proportions: Vec<f64> = match model {
        SplitModel::Uniform => {
            let e: Vec<f64> = (0..parts).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = e.iter().sum();
            e.iter().map(|x| x / total).collect()
        }
        SplitModel::Fixed { p } if parts == 1 => vec![p.max(1.0)],
        SplitModel::Fixed { p } => {
            std::iter::once(p).chain(std::iter::repeat_n((1.0 - p) / (parts - 1) as f64, parts - 1)).collect()
        }
    };
    let mut left = count;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(parts);
    for (k, &q) in proportions.iter().enumerate() {
        let take = if k + 1 == parts || left == 0 {
            left
        } else {
            let share = (q / mass).clamp(0.0, 1.0);
            Binomial::new(left, share).expect("share lies in [0, 1]").sample(rng)
        };
        out.push(take);
        left -= take;
        mass -= q;
    }
    out
}

/// Checks the merging identity on `attribute`, then re-splits its merged
/// counts at random `trials` times and compares the split score with the
/// merged one.
pub fn rescaling_experiment(
    stats: &PartitionStats,
    attribute: &str,
    merge_map: &BTreeMap<String, String>,
    params: &RescaleParams,
) -> Result<ExperimentReport, LabError> {
    if params.trials == 0 {
        return Err(LabError::InvalidSpec("need at least one trial".into()));
    }
    if let SplitModel::Fixed { p } = params.split {
        if !(0.0..=1.0).contains(&p) {
            return Err(LabError::InvalidSpec(format!("split proportion must lie in [0, 1], got {p}")));
        }
    }
    let identity = covariance_identity(stats, attribute, merge_map)?;
    let fine = stats.discrete(attribute)?;
    let merged_stats = merge_values(stats, attribute, merge_map)?;
    let merged = merged_stats.discrete(attribute)?;
    let eval_merged = table_contribution(merged);

    // members[u]: fine value indices merging into coarse value u
    let mut members = vec![Vec::new(); merged.value_count()];
    for (k, v) in fine.values().iter().enumerate() {
        let u = merged.values().iter().position(|c| *c == merge_map[v]).expect("merge map is total");
        members[u].push(k);
    }

    let mut rng = seeded_rng(params.seed);
    let mut higher = 0usize;
    let mut gap_sum = 0.0;
    for _ in 0..params.trials {
        let counts: Vec<Vec<u64>> = merged
            .counts()
            .iter()
            .map(|row| {
                let mut out = vec![0u64; fine.value_count()];
                for (u, &c) in row.iter().enumerate() {
                    for (&k, share) in members[u].iter().zip(split_count(c, members[u].len(), params.split, &mut rng)) {
                        out[k] = share;
                    }
                }
                out
            })
            .collect();
        let gap = table_contribution(&ContingencyTable::new(fine.values().to_vec(), counts)) - eval_merged;
        if gap > 0.0 {
            higher += 1;
        }
        gap_sum += gap;
    }
    let fraction = higher as f64 / params.trials as f64;
    let cov_sum: f64 = identity.cov_terms.iter().map(|t| t.cov).sum();

    let mut report = ExperimentReport::new(
        "rescale",
        serde_json::json!({ "attribute": attribute, "merge_map": merge_map, "monte_carlo": params }),
    );
    report.scalar("eval_fine", identity.eval_fine);
    report.scalar("eval_merged", identity.eval_merged);
    report.scalar("covariance_sum", cov_sum);
    report.scalar("residual", identity.residual);
    report.scalar("fraction_split_higher", fraction);
    report.scalar("mean_gap", gap_sum / params.trials as f64);
    report.check("identity", Check::absolute(identity.residual, 0.0, 1e-12));
    report.check("majority", Check::greater(fraction, 0.5));
    Ok(report)
}
