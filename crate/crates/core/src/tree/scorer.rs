//! Incremental candidate scoring. Every placement of a record among the
//! classes of one partition is scored in `O(attributes)` from per-class
//! aggregates computed once per level, instead of rebuilding the whole
//! partition per candidate.

use super::Tally;
use crate::data::{Record, Value};
use crate::eval::{aggregate, AsymmetricTerms, EvalConfig, EvalError, StepMemory, Variant};
use crate::schema::Schema;
use crate::stats::Moments;

/// Discrete attribute read by the predicting term.
#[derive(Debug, Clone)]
pub(crate) struct PredictingSlot {
    pub attr: usize,
    pub availability: f64,
}

/// Discrete attribute read by the predicted term, through its coarse grid.
#[derive(Debug, Clone)]
pub(crate) struct PredictedSlot {
    pub attr: usize,
    pub name: String,
    pub weight: f64,
    pub coarse: Vec<usize>,
    pub coarse_len: usize,
}

/// Which attributes the configured criterion reads.
#[derive(Debug, Clone)]
pub(crate) enum Plan {
    Symmetric { attrs: Vec<usize> },
    Asymmetric { predicting: Vec<PredictingSlot>, predicted: Vec<PredictedSlot> },
}

impl Plan {
    /// Symmetric criteria read the non-predicted attributes of the matching
    /// kind; the asymmetric one reads every discrete attribute by role.
    pub fn new(schema: &Schema, config: &EvalConfig, availability: &[f64]) -> Result<Self, EvalError> {
        let attrs = schema.attributes();
        match config.variant {
            Variant::Fisher | Variant::Gennari | Variant::ScaleFree => {
                let discrete = config.variant == Variant::Fisher;
                let picked: Vec<usize> = (0..attrs.len())
                    .filter(|&j| attrs[j].role.is_predicting() && attrs[j].is_discrete() == discrete)
                    .collect();
                if picked.is_empty() {
                    return Err(if discrete {
                        EvalError::NoDiscreteAttributes
                    } else {
                        EvalError::NoContinuousAttributes
                    });
                }
                Ok(Plan::Symmetric { attrs: picked })
            }
            Variant::Asymmetric => {
                let mut predicting = Vec::new();
                let mut predicted = Vec::new();
                for (j, a) in attrs.iter().enumerate().filter(|(_, a)| a.is_discrete()) {
                    let both = a.role.is_predicting() && a.role.is_predicted();
                    if a.role.is_predicting() {
                        predicting.push(PredictingSlot {
                            attr: j,
                            availability: availability[j],
                        });
                    }
                    if a.role.is_predicted() {
                        let (values, coarse) = a.coarse_grid();
                        predicted.push(PredictedSlot {
                            attr: j,
                            name: if both { crate::eval::predicted_name(&a.name) } else { a.name.clone() },
                            weight: a.weight,
                            coarse,
                            coarse_len: values.len(),
                        });
                    }
                }
                if predicted.is_empty() {
                    return Err(EvalError::EmptyPredictedSet);
                }
                if predicting.is_empty() {
                    return Err(EvalError::EmptyPredictingSet);
                }
                Ok(Plan::Asymmetric { predicting, predicted })
            }
        }
    }
}

/// Score of one candidate placement and, for the asymmetric criterion,
/// the memory it would leave behind.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Candidate {
    pub score: f64,
    pub memory: Option<StepMemory>,
}

fn discrete(t: &Tally) -> &[u64] {
    match t {
        Tally::Discrete(c) => c,
        Tally::Continuous(_) => unreachable!("plan selects discrete attributes"),
    }
}

fn moments(t: &Tally) -> Moments {
    match t {
        Tally::Continuous(m) => *m,
        Tally::Discrete(_) => unreachable!("plan selects continuous attributes"),
    }
}

/// Scores `record` added to each class in turn, then as a new singleton
/// class (last entry). `classes[i]` is the tally vector of class `i`.
pub(crate) fn candidate_scores(
    classes: &[&[Tally]],
    record: &Record,
    plan: &Plan,
    config: &EvalConfig,
    memory: Option<&StepMemory>,
) -> Vec<Candidate> {
    let m = classes.len();
    let plain = |scores: Vec<f64>| scores.into_iter().map(|score| Candidate { score, memory: None }).collect();
    match (plan, config.variant) {
        (Plan::Symmetric { attrs }, Variant::Fisher) => plain(fisher(classes, record, attrs)),
        (Plan::Symmetric { attrs }, Variant::Gennari) => {
            let (sums, _) = continuous(classes, record, attrs, config.acuity, false);
            plain(sums.iter().enumerate().map(|(i, s)| s / if i < m { m } else { m + 1 } as f64).collect())
        }
        (Plan::Symmetric { attrs }, Variant::ScaleFree) => {
            let (sums, k) = continuous(classes, record, attrs, config.acuity, true);
            plain(sums.iter().map(|s| if k == 0 { 0.0 } else { s / k as f64 - 1.0 }).collect())
        }
        (Plan::Asymmetric { predicting, predicted }, _) => {
            asymmetric(classes, record, predicting, predicted, config, memory)
        }
        (Plan::Symmetric { .. }, Variant::Asymmetric) => unreachable!("plan follows the variant"),
    }
}

fn fisher(classes: &[&[Tally]], record: &Record, attrs: &[usize]) -> Vec<f64> {
    let m = classes.len();
    let mut sums = vec![0.0; m + 1];
    for &j in attrs {
        let tables: Vec<&[u64]> = classes.iter().map(|c| discrete(&c[j])).collect();
        let values = tables[0].len();
        let n: Vec<f64> = tables.iter().map(|t| t.iter().sum::<u64>() as f64).collect();
        let q: Vec<f64> = tables.iter().map(|t| t.iter().map(|&c| (c * c) as f64).sum()).collect();
        let s: f64 = (0..m).filter(|&i| n[i] > 0.0).map(|i| q[i] / n[i]).sum();
        let root: Vec<u64> = (0..values).map(|v| tables.iter().map(|t| t[v]).sum()).collect();
        let total: f64 = n.iter().sum();
        let r: f64 = root.iter().map(|&c| (c * c) as f64).sum();
        match record.values[j] {
            Value::Discrete(v) => {
                let n1 = total + 1.0;
                let r1 = r + 2.0 * root[v] as f64 + 1.0;
                let marginal = r1 / (n1 * n1);
                for i in 0..m {
                    let old = if n[i] > 0.0 { q[i] / n[i] } else { 0.0 };
                    let s1 = s - old + (q[i] + 2.0 * tables[i][v] as f64 + 1.0) / (n[i] + 1.0);
                    sums[i] += s1 / n1 - marginal;
                }
                sums[m] += (s + 1.0) / n1 - marginal;
            }
            _ => {
                let c = if total > 0.0 { s / total - r / (total * total) } else { 0.0 };
                sums.iter_mut().for_each(|x| *x += c);
            }
        }
    }
    sums.iter().enumerate().map(|(i, s)| s / if i < m { m } else { m + 1 } as f64).collect()
}

/// Per-candidate sums over continuous attributes: Gennari terms, or
/// scale-free ratio sums with the number of observed attributes.
fn continuous(classes: &[&[Tally]], record: &Record, attrs: &[usize], acuity: f64, scale_free: bool) -> (Vec<f64>, usize) {
    let m = classes.len();
    let floor = |s: f64| s.max(acuity);
    let mut sums = vec![0.0; m + 1];
    let mut observed = 0;
    for &j in attrs {
        let cols: Vec<Moments> = classes.iter().map(|c| moments(&c[j])).collect();
        let g: f64 = cols.iter().filter(|c| c.count > 0).map(|c| c.count as f64 / floor(c.std_dev())).sum();
        let root = cols.iter().fold(Moments::default(), |acc, c| acc.merge(c));
        let total = root.count as f64;
        match record.values[j] {
            Value::Continuous(x) => {
                observed += 1;
                let mut root1 = root;
                root1.push(x);
                let fr = floor(root1.std_dev());
                let n1 = total + 1.0;
                let term = |g1: f64| if scale_free { fr * g1 / n1 } else { g1 / n1 - 1.0 / fr };
                for (i, c) in cols.iter().enumerate() {
                    let old = if c.count > 0 { c.count as f64 / floor(c.std_dev()) } else { 0.0 };
                    let mut c1 = *c;
                    c1.push(x);
                    sums[i] += term(g - old + c1.count as f64 / floor(c1.std_dev()));
                }
                sums[m] += term(g + 1.0 / floor(0.0));
            }
            _ if total > 0.0 => {
                observed += 1;
                let fr = floor(root.std_dev());
                let c = if scale_free { fr * g / total } else { g / total - 1.0 / fr };
                sums.iter_mut().for_each(|x| *x += c);
            }
            _ => {}
        }
    }
    (sums, observed)
}

fn asymmetric(
    classes: &[&[Tally]],
    record: &Record,
    predicting: &[PredictingSlot],
    predicted: &[PredictedSlot],
    config: &EvalConfig,
    memory: Option<&StepMemory>,
) -> Vec<Candidate> {
    let m = classes.len();
    let ratio = |hits: u64, n: u64| if n == 0 { 0.0 } else { hits as f64 / n as f64 };

    // values[candidate][predicting slot]
    let mut values = vec![Vec::with_capacity(predicting.len()); m + 1];
    for slot in predicting {
        let tables: Vec<&[u64]> = classes.iter().map(|c| discrete(&c[slot.attr])).collect();
        let colmax: Vec<u64> =
            (0..tables[0].len()).map(|v| tables.iter().map(|t| t[v]).max().unwrap_or(0)).collect();
        let hits: u64 = colmax.iter().sum();
        let n: u64 = tables.iter().map(|t| t.iter().sum::<u64>()).sum();
        match record.values[slot.attr] {
            Value::Discrete(v) => {
                for (i, t) in tables.iter().enumerate() {
                    let h = hits - colmax[v] + colmax[v].max(t[v] + 1);
                    values[i].push(slot.availability * ratio(h, n + 1));
                }
                let h = hits - colmax[v] + colmax[v].max(1);
                values[m].push(slot.availability * ratio(h, n + 1));
            }
            _ => values.iter_mut().for_each(|vs| vs.push(slot.availability * ratio(hits, n))),
        }
    }

    // accuracy[candidate][predicted slot]
    let mut accuracy = vec![Vec::with_capacity(predicted.len()); m + 1];
    for slot in predicted {
        let coarse: Vec<Vec<u64>> = classes
            .iter()
            .map(|c| {
                let mut row = vec![0u64; slot.coarse_len];
                for (v, &count) in discrete(&c[slot.attr]).iter().enumerate() {
                    row[slot.coarse[v]] += count;
                }
                row
            })
            .collect();
        let rowmax: Vec<u64> = coarse.iter().map(|r| r.iter().copied().max().unwrap_or(0)).collect();
        let hits: u64 = rowmax.iter().sum();
        let n: u64 = coarse.iter().flatten().sum();
        match record.values[slot.attr] {
            Value::Discrete(v) => {
                let u = slot.coarse[v];
                for i in 0..m {
                    let h = hits - rowmax[i] + rowmax[i].max(coarse[i][u] + 1);
                    accuracy[i].push(ratio(h, n + 1));
                }
                accuracy[m].push(ratio(hits + 1, n + 1));
            }
            _ => accuracy.iter_mut().for_each(|a| a.push(ratio(hits, n))),
        }
    }

    values
        .iter()
        .zip(&accuracy)
        .map(|(vals, accs)| {
            let terms = AsymmetricTerms {
                predicted: predicted.iter().zip(accs).map(|(s, &a)| (s.name.clone(), s.weight, a)).collect(),
                predicting_best: aggregate(vals, config.asym.aggregator),
            };
            let (score, next) = terms.score(memory, config.asym.class_weight);
            Candidate { score, memory: Some(next) }
        })
        .collect()
}

/// Index of the best score; near-ties resolve to the lowest index.
pub(crate) fn pick(scores: &[f64], tolerance: f64) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = tolerance * best.abs().max(1.0);
    scores.iter().position(|&s| s >= best - slack).unwrap_or(0)
}
