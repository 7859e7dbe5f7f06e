//! End-to-end behaviour of fitted hierarchies on generated data.

use std::collections::BTreeMap;

use conceptforge::canon::to_canonical_string;
use conceptforge::data::{Dataset, Record, Value};
use conceptforge::eval::{EvalConfig, Variant};
use conceptforge::synth::{generate, Generator, SyntheticSpec};
use conceptforge::tree::{ConceptTree, TIE_TOLERANCE};

fn ideal_uniform(classes: usize, deltas: Vec<f64>, n: usize, seed: u64) -> Dataset {
    generate(&SyntheticSpec::new(Generator::IdealUniform { classes, deltas, n, class_mass: None }, seed)).unwrap()
}

/// Population σ by two passes.
fn sigma(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Score of a partition of rows (continuous attributes only), straight
/// from the definitions.
fn continuous_score(groups: &[Vec<&[f64]>], acuity: f64, scale_free: bool) -> f64 {
    let attrs = groups[0][0].len();
    let n: usize = groups.iter().map(Vec::len).sum();
    let floor = |s: f64| s.max(acuity);
    let mut total = 0.0;
    for j in 0..attrs {
        let all: Vec<f64> = groups.iter().flatten().map(|r| r[j]).collect();
        let root = floor(sigma(&all));
        let mut within = 0.0;
        for g in groups {
            let column: Vec<f64> = g.iter().map(|r| r[j]).collect();
            within += g.len() as f64 / n as f64 / floor(sigma(&column));
        }
        total += if scale_free { root * within } else { within - 1.0 / root };
    }
    if scale_free {
        total / attrs as f64 - 1.0
    } else {
        total / groups.len() as f64
    }
}

/// Top-level partition reached by greedy insertion in record order: each
/// record joins the group (or new group, last) that maximizes the score,
/// near-ties going to the lowest index.
fn greedy_top_level(rows: &[Vec<f64>], acuity: f64, scale_free: bool) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = vec![vec![0]];
    for r in 1..rows.len() {
        let mut scores = Vec::with_capacity(groups.len() + 1);
        for candidate in 0..=groups.len() {
            let mut trial = groups.clone();
            if candidate == groups.len() {
                trial.push(vec![r]);
            } else {
                trial[candidate].push(r);
            }
            let as_rows: Vec<Vec<&[f64]>> =
                trial.iter().map(|g| g.iter().map(|&i| rows[i].as_slice()).collect()).collect();
            scores.push(continuous_score(&as_rows, acuity, scale_free));
        }
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = TIE_TOLERANCE * best.abs().max(1.0);
        let chosen = scores.iter().position(|&s| s >= best - slack).unwrap();
        if chosen == groups.len() {
            groups.push(vec![r]);
        } else {
            groups[chosen].push(r);
        }
    }
    groups
}

fn top_level_groups(tree: &ConceptTree) -> Vec<Vec<usize>> {
    let paths = tree.instance_paths();
    let root = tree.root().unwrap();
    if root.is_leaf() {
        return vec![(0..tree.objects()).collect()];
    }
    (0..root.children.len())
        .map(|c| (0..tree.objects()).filter(|&id| paths[id].first() == Some(&c)).collect())
        .collect()
}

fn continuous_rows(data: &Dataset) -> Vec<Vec<f64>> {
    data.records()
        .iter()
        .map(|r| {
            r.values
                .iter()
                .filter_map(|v| match v {
                    Value::Continuous(x) => Some(*x),
                    _ => None,
                })
                .collect()
        })
        .collect()
}

fn label(record: &Record) -> usize {
    match record.values[0] {
        Value::Discrete(c) => c,
        _ => panic!("class column is observed"),
    }
}

#[test]
fn top_level_matches_the_greedy_oracle() {
    for (variant, scale_free) in [(Variant::ScaleFree, true), (Variant::Gennari, false)] {
        for acuity in [1e-6, 0.05] {
            for seed in 0..3 {
                let data = ideal_uniform(3, vec![1.0, 2.0], 120, seed);
                let tree = ConceptTree::fit(&data, EvalConfig::new(variant).with_acuity(acuity)).unwrap();
                let expected = greedy_top_level(&continuous_rows(&data), acuity, scale_free);
                assert_eq!(top_level_groups(&tree), expected, "{variant:?} acuity {acuity} seed {seed}");
            }
        }
    }
}

/// With a small acuity the scale-free criterion keeps opening new classes:
/// the hierarchy separates the labels perfectly but fragments far beyond
/// the three generating classes.
#[test]
fn scale_free_fragments_ideal_uniform_data_into_pure_classes() {
    let data = ideal_uniform(3, vec![1.0], 300, 42);
    let tree = ConceptTree::fit(&data, EvalConfig::new(Variant::ScaleFree)).unwrap();
    assert!(tree.audit().is_empty());

    let mut leaves: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (id, path) in tree.instance_paths().into_iter().enumerate() {
        leaves.entry(path).or_default().push(label(&data.records()[id]));
    }
    for (path, labels) in &leaves {
        assert!(labels.iter().all(|&c| c == labels[0]), "leaf {path:?} mixes labels {labels:?}");
    }
    let top = top_level_groups(&tree);
    for group in &top {
        let first = label(&data.records()[group[0]]);
        assert!(group.iter().all(|&i| label(&data.records()[i]) == first));
    }
    assert!(top.len() > 3, "top level has {} classes", top.len());
}

#[test]
fn every_generator_fits_to_a_consistent_tree() {
    let cases: Vec<(Generator, Vec<Variant>)> = vec![
        (
            Generator::IdealUniform { classes: 4, deltas: vec![0.1, 10.0], n: 400, class_mass: None },
            vec![Variant::Gennari, Variant::ScaleFree],
        ),
        (Generator::TwoDensity { b: 1.0, a: 1.0, d1: 1.0, d2: 2.0, n: 400 }, vec![Variant::Gennari, Variant::ScaleFree]),
        (
            Generator::BivariateNormal { mu_x: 0.0, mu_y: 1.0, sigma_x: 1.0, sigma_y: 3.0, r: 0.6, n: 400 },
            vec![Variant::Gennari, Variant::ScaleFree],
        ),
        (Generator::BooleanDiagnostic { k: 5, n: 400 }, vec![Variant::Fisher, Variant::Asymmetric]),
    ];
    for (generator, variants) in cases {
        let data = generate(&SyntheticSpec::new(generator.clone(), 7)).unwrap();
        for variant in variants {
            let tree = ConceptTree::fit(&data, EvalConfig::new(variant)).unwrap();
            assert_eq!(tree.objects(), 400);
            assert_eq!(tree.root().unwrap().count, 400);
            assert_eq!(tree.insertion_log().len(), 400);
            let violations = tree.audit();
            assert!(violations.is_empty(), "{generator:?} {variant:?}: {violations:?}");
        }
    }
}

#[test]
fn saved_tree_reloads_and_predicts_identically() {
    let data = generate(&SyntheticSpec::new(Generator::BooleanDiagnostic { k: 4, n: 64 }, 3)).unwrap();
    for variant in [Variant::Fisher, Variant::Asymmetric] {
        let tree = ConceptTree::fit(&data, EvalConfig::new(variant)).unwrap();
        let text = to_canonical_string(&tree.to_json_value());
        let reloaded = ConceptTree::from_json_str(&text).unwrap();
        assert_eq!(to_canonical_string(&reloaded.to_json_value()), text);
        for record in data.records() {
            assert_eq!(tree.predict(record).unwrap(), reloaded.predict(record).unwrap());
        }
    }
}

#[test]
fn fitting_is_deterministic() {
    let data = ideal_uniform(3, vec![1.0, 5.0], 200, 9);
    let config = EvalConfig::new(Variant::ScaleFree).with_acuity(0.05);
    let first = to_canonical_string(&ConceptTree::fit(&data, config).unwrap().to_json_value());
    let second = to_canonical_string(&ConceptTree::fit(&data, config).unwrap().to_json_value());
    assert_eq!(first, second);
}
