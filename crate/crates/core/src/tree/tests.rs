use std::collections::HashMap;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::eval::{Aggregator, AsymmetricConfig};
use crate::schema::{AttributeSchema, Role};
use crate::synth::{generate, seeded_rng, Generator, SyntheticSpec};

fn binary_schema(k: usize) -> Schema {
    Schema::new((0..k).map(|j| AttributeSchema::discrete(format!("b{j}"), ["0", "1"])).collect()).unwrap()
}

fn rows(rows: &[&[usize]]) -> Vec<Record> {
    rows.iter().map(|r| Record::new(r.iter().map(|&v| Value::Discrete(v)).collect())).collect()
}

fn fisher() -> EvalConfig {
    EvalConfig::new(Variant::Fisher)
}

/// Replays the insertion log into the final leaf path of every record.
fn replay(log: &[Vec<Step>]) -> Vec<Vec<usize>> {
    let mut paths: Vec<Vec<usize>> = Vec::new();
    for steps in log {
        let mut here = Vec::new();
        for step in steps {
            match *step {
                Step::Root | Step::Absorb => {}
                Step::Child { index } | Step::NewChild { index } => here.push(index),
                Step::SplitLeaf => {
                    for p in paths.iter_mut().filter(|p| **p == here) {
                        p.push(0);
                    }
                    here.push(1);
                }
            }
        }
        paths.push(here);
    }
    paths
}

#[test]
fn first_record_becomes_root_leaf() {
    let mut tree = ConceptTree::new(binary_schema(2), fisher()).unwrap();
    tree.incorporate(&rows(&[&[0, 1]])[0]).unwrap();
    let root = tree.root().unwrap();
    assert!(root.is_leaf());
    assert_eq!(root.count, 1);
    assert_eq!(tree.insertion_log(), [vec![Step::Root]]);
}

#[test]
fn identical_record_is_absorbed() {
    let mut tree = ConceptTree::new(binary_schema(2), fisher()).unwrap();
    for r in rows(&[&[0, 1], &[0, 1]]) {
        tree.incorporate(&r).unwrap();
    }
    assert!(tree.root().unwrap().is_leaf());
    assert_eq!(tree.insertion_log()[1], vec![Step::Absorb]);
}

#[test]
fn identical_records_stay_in_one_leaf() {
    let data = vec![rows(&[&[1, 0, 1]])[0].clone(); 25];
    let tree = ConceptTree::fit(&Dataset::new(binary_schema(3), data).unwrap(), fisher()).unwrap();
    let root = tree.root().unwrap();
    assert!(root.is_leaf());
    assert_eq!(root.count, 25);
    assert!(tree.audit().is_empty());
}

/// Every boolean function of `m` objects as a column: the closure of any
/// base columns that separate all objects.
fn all_functions_dataset(m: usize) -> Dataset {
    let columns = 1usize << m;
    let records = (0..m)
        .map(|o| Record::new((0..columns).map(|f| Value::Discrete((f >> o) & 1)).collect()))
        .collect();
    Dataset::new(binary_schema(columns), records).unwrap()
}

#[test]
fn closed_dataset_gives_singleton_classes() {
    for m in [3, 4, 8] {
        let tree = ConceptTree::fit(&all_functions_dataset(m), fisher()).unwrap();
        let root = tree.root().unwrap();
        assert_eq!(root.children.len(), m, "m = {m}");
        assert!(root.children.iter().all(|c| c.is_leaf() && c.count == 1));
    }
}

#[test]
fn partition_eval_examples() {
    let schema = binary_schema(1);
    let tree = ConceptTree::new(schema.clone(), fisher()).unwrap();
    let leaf = |v: usize, n: usize| {
        let mut node = ConceptNode::empty(&schema);
        for _ in 0..n {
            node.absorb(&rows(&[&[v]])[0]);
        }
        node
    };
    let mut one = ConceptNode::empty(&schema);
    one.children.push(leaf(0, 3));
    assert_eq!(tree.partition_eval(&one).unwrap(), 0.0);

    let mut two = ConceptNode::empty(&schema);
    two.children = vec![leaf(0, 2), leaf(1, 2)];
    assert!((tree.partition_eval(&two).unwrap() - 0.25).abs() < 1e-15);

    assert!(matches!(tree.partition_eval(&leaf(0, 1)), Err(TreeError::LeafNode)));
}

#[test]
fn partition_eval_scalefree_ideal_uniform_children() {
    let schema = Schema::new(vec![AttributeSchema::continuous("x")]).unwrap();
    let tree = ConceptTree::new(schema.clone(), EvalConfig::new(Variant::ScaleFree)).unwrap();
    for m in 2..6 {
        let mut parent = ConceptNode::empty(&schema);
        for i in 0..m {
            let mut child = ConceptNode::empty(&schema);
            for k in 0..1000 {
                // midpoint grid: population σ is width·√((1 − 1/n²)/12)
                child.absorb(&Record::new(vec![Value::Continuous(i as f64 + (k as f64 + 0.5) / 1000.0)]));
            }
            parent.children.push(child);
        }
        let v = tree.partition_eval(&parent).unwrap();
        let n = 1000.0 * m as f64;
        let expected = m as f64 * ((1.0 - 1.0 / (n * n)) / (1.0 - 1e-6)).sqrt() - 1.0;
        assert!((v - expected).abs() < 1e-9, "m = {m}: {v} vs {expected}");
        assert!((v - (m as f64 - 1.0)).abs() < 1e-5);
    }
}

fn mixed_schema() -> Schema {
    Schema::new(vec![
        AttributeSchema::discrete("colour", ["r", "g", "b"]),
        AttributeSchema::discrete("shape", ["sq", "ci", "tr", "st"]).with_predicted_grid([
            ("sq", "angular"),
            ("ci", "round"),
            ("tr", "angular"),
            ("st", "angular"),
        ]),
        AttributeSchema::continuous("size"),
        AttributeSchema::continuous("weight"),
        AttributeSchema::discrete("label", ["p", "q"]).with_role(Role::Predicted).with_weight(2.0),
    ])
    .unwrap()
}

fn random_record(rng: &mut impl Rng, missing: f64) -> Record {
    let sizes = [3, 4, 0, 0, 2];
    Record::new(
        sizes
            .iter()
            .map(|&k| {
                if rng.random::<f64>() < missing {
                    Value::Missing
                } else if k == 0 {
                    Value::Continuous((rng.random::<f64>() * 4.0).round() / 2.0 + rng.random::<f64>() * 0.1)
                } else {
                    Value::Discrete(rng.random_range(0..k))
                }
            })
            .collect(),
    )
}

/// Rebuilds every candidate partition explicitly and scores it through
/// the evaluation module.
fn materialized_scores(tree: &ConceptTree, node: &ConceptNode, record: &Record) -> Vec<f64> {
    let schema = tree.schema();
    let singleton = || {
        let mut n = ConceptNode::empty(schema);
        n.absorb(record);
        n
    };
    let bare = |n: &ConceptNode| ConceptNode { children: Vec::new(), instances: Vec::new(), memory: None, ..n.clone() };
    let classes: Vec<ConceptNode> =
        if node.is_leaf() { vec![bare(node)] } else { node.children.iter().map(bare).collect() };
    let mut out = Vec::new();
    for i in 0..=classes.len() {
        let mut parent = ConceptNode::empty(schema);
        parent.memory = node.memory.clone();
        parent.children = classes.clone();
        if i < classes.len() {
            parent.children[i].absorb(record);
        } else {
            parent.children.push(singleton());
        }
        out.push(tree.partition_eval(&parent).unwrap());
    }
    out
}

fn dual_route(config: EvalConfig, seed: u64, n: usize, missing: f64) {
    let mut rng = seeded_rng(seed);
    let mut tree = ConceptTree::new(mixed_schema(), config).unwrap();
    for _ in 0..n {
        let record = random_record(&mut rng, missing);
        let mut path = Vec::new();
        while tree.root().is_some() {
            let node = tree.node(&path).unwrap();
            let fast = tree.candidate_scores(&path, &record).unwrap();
            let slow = materialized_scores(&tree, node, &record);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0), "{config:?}: {fast:?} vs {slow:?}");
            }
            let i = pick(&fast, TIE_TOLERANCE);
            if node.is_leaf() || i == node.children.len() {
                break;
            }
            path.push(i);
        }
        tree.incorporate(&record).unwrap();
    }
    assert!(tree.audit().is_empty());
}

#[test]
fn incremental_scores_match_materialized_partitions() {
    let mut asym = EvalConfig::new(Variant::Asymmetric);
    for (seed, missing) in [(1, 0.0), (2, 0.2)] {
        dual_route(fisher(), seed, 120, missing);
        dual_route(EvalConfig::new(Variant::Gennari).with_acuity(0.05), seed, 120, missing);
        dual_route(EvalConfig::new(Variant::ScaleFree).with_acuity(0.05), seed, 120, missing);
        dual_route(EvalConfig::new(Variant::ScaleFree), seed, 60, missing);
        asym.asym = AsymmetricConfig::default();
        dual_route(asym, seed, 120, missing);
        asym.asym = AsymmetricConfig { class_weight: 0.5, aggregator: Aggregator::TopN { n: 2 }, ..asym.asym };
        dual_route(asym, seed, 120, missing);
    }
}

/// Fisher criterion of a partition of rows, from plain counting.
fn fisher_of(groups: &[Vec<&Record>]) -> f64 {
    let m = groups.len();
    if m < 2 {
        return 0.0;
    }
    let attrs = groups[0][0].values.len();
    let all: Vec<&Record> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let sq = |rs: &[&Record], j: usize| {
        let mut c: HashMap<usize, f64> = HashMap::new();
        for r in rs {
            if let Value::Discrete(v) = r.values[j] {
                *c.entry(v).or_default() += 1.0;
            }
        }
        c.values().map(|x| (x / rs.len() as f64).powi(2)).sum::<f64>()
    };
    let within: f64 = groups.iter().map(|g| g.len() as f64 / n * (0..attrs).map(|j| sq(g, j)).sum::<f64>()).sum();
    let root: f64 = (0..attrs).map(|j| sq(&all, j)).sum();
    (within - root) / m as f64
}

/// Top-level greedy: each record joins the class or starts the new class
/// scoring best, ties toward existing classes and lower indices.
fn greedy_top_level(records: &[Record]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (id, _) in records.iter().enumerate() {
        if groups.is_empty() {
            groups.push(vec![id]);
            continue;
        }
        let score = |g: &[Vec<usize>]| {
            fisher_of(&g.iter().map(|ids| ids.iter().map(|&i| &records[i]).collect()).collect::<Vec<_>>())
        };
        let options: Vec<f64> = (0..=groups.len())
            .map(|i| {
                let mut g = groups.clone();
                if i < g.len() {
                    g[i].push(id);
                } else {
                    g.push(vec![id]);
                }
                score(&g)
            })
            .collect();
        let best = options.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let i = options.iter().position(|&s| s >= best - 1e-12 * best.abs().max(1.0)).unwrap();
        if i < groups.len() {
            groups[i].push(id);
        } else {
            groups.push(vec![id]);
        }
    }
    groups
}

/// All set partitions of `0..n`.
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<Vec<usize>>> = vec![vec![]];
    for id in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                let mut next = Vec::new();
                for i in 0..=p.len() {
                    let mut q = p.clone();
                    if i < q.len() {
                        q[i].push(id);
                    } else {
                        q.push(vec![id]);
                    }
                    next.push(q);
                }
                next
            })
            .collect();
    }
    out
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

#[test]
fn six_objects_top_level_matches_greedy_oracle() {
    let partitions = set_partitions(6);
    assert_eq!(partitions.len(), 203);
    let mut rng = seeded_rng(77);
    for _ in 0..40 {
        let records: Vec<Record> = (0..6)
            .map(|_| Record::new(vec![Value::Discrete(rng.random_range(0..3)), Value::Discrete(rng.random_range(0..2))]))
            .collect();
        let schema = Schema::new(vec![
            AttributeSchema::discrete("a", ["0", "1", "2"]),
            AttributeSchema::discrete("b", ["0", "1"]),
        ])
        .unwrap();
        let tree = ConceptTree::fit(&Dataset::new(schema, records.clone()).unwrap(), fisher()).unwrap();
        let got = top_level_groups(&tree);
        let expected = greedy_top_level(&records);
        assert_eq!(got, expected);
        let as_records = |g: &[Vec<usize>]| -> Vec<Vec<&Record>> {
            g.iter().map(|ids| ids.iter().map(|&i| &records[i]).collect()).collect()
        };
        let tree_score = if tree.root().unwrap().is_leaf() { 0.0 } else { tree.partition_eval(tree.root().unwrap()).unwrap() };
        assert!((tree_score - fisher_of(&as_records(&expected))).abs() < 1e-12);
        let optimum = partitions.iter().map(|p| fisher_of(&as_records(p))).fold(f64::NEG_INFINITY, f64::max);
        assert!(tree_score <= optimum + 1e-12);
    }
}

#[test]
fn replayed_log_matches_instance_paths() {
    let mut rng = seeded_rng(5);
    for config in [fisher(), EvalConfig::new(Variant::ScaleFree).with_acuity(0.1), EvalConfig::new(Variant::Asymmetric)] {
        let records: Vec<Record> = (0..150).map(|_| random_record(&mut rng, 0.1)).collect();
        let tree = ConceptTree::fit(&Dataset::new(mixed_schema(), records).unwrap(), config).unwrap();
        assert_eq!(replay(tree.insertion_log()), tree.instance_paths());
        assert_eq!(tree.insertion_log().len(), 150);
    }
}

#[test]
fn training_record_predicts_its_logged_path() {
    let data = all_functions_dataset(4);
    let tree = ConceptTree::fit(&data, fisher()).unwrap();
    let logged = replay(tree.insertion_log());
    for (id, record) in data.records().iter().enumerate() {
        assert_eq!(tree.predict(record).unwrap().path, logged[id]);
    }
}

fn ideal_uniform(classes: usize, n: usize, seed: u64) -> Dataset {
    generate(&SyntheticSpec::new(Generator::IdealUniform { classes, deltas: vec![1.0], n, class_mass: None }, seed))
        .unwrap()
}

#[test]
fn separated_classes_predict_their_label() {
    let data = ideal_uniform(2, 200, 3);
    let tree = ConceptTree::fit(&data, EvalConfig::new(Variant::ScaleFree)).unwrap();
    let schema = tree.schema();
    let mut partial = Record::missing(schema.len());
    partial.values[schema.index_of("a1").unwrap()] = Value::Continuous(0.1);
    let prediction = tree.predict(&partial).unwrap();
    assert!(!prediction.path.is_empty());
    assert_eq!(prediction.values[0], ("class".to_string(), PredictedValue::Discrete("c1".into())));
    let PredictedValue::Continuous(a1) = prediction.values[1].1 else { panic!() };
    assert!((0.0..0.5).contains(&a1));
    let stop = tree.node(&prediction.path).unwrap();
    let Tally::Discrete(labels) = &stop.tallies[schema.index_of("class").unwrap()] else { panic!() };
    assert_eq!(labels[1], 0, "stopping node mixes classes: {labels:?}");
}

#[test]
fn all_missing_partial_stops_at_root() {
    let data = ideal_uniform(3, 90, 4);
    let tree = ConceptTree::fit(&data, EvalConfig::new(Variant::ScaleFree)).unwrap();
    let prediction = tree.predict(&Record::missing(tree.schema().len())).unwrap();
    assert!(prediction.path.is_empty());
    let Tally::Discrete(labels) = &tree.root().unwrap().tallies[0] else { panic!() };
    let modal = labels.iter().position(|c| c == labels.iter().max().unwrap()).unwrap();
    assert_eq!(prediction.values[0].1, PredictedValue::Discrete(format!("c{}", modal + 1)));
}

#[test]
fn predict_on_empty_tree_fails() {
    let tree = ConceptTree::new(binary_schema(1), fisher()).unwrap();
    assert!(matches!(tree.predict(&Record::missing(1)), Err(TreeError::EmptyTree)));
}

#[test]
fn schema_mismatch_is_rejected() {
    let mut tree = ConceptTree::new(binary_schema(2), fisher()).unwrap();
    let err = tree.incorporate(&Record::new(vec![Value::Discrete(0)])).unwrap_err();
    assert!(matches!(err, TreeError::SchemaMismatch(_)));
    let err = tree.incorporate(&Record::new(vec![Value::Discrete(0), Value::Continuous(1.0)])).unwrap_err();
    assert!(matches!(err, TreeError::SchemaMismatch(_)));
}

#[test]
fn variant_needs_matching_attributes() {
    let err = ConceptTree::new(binary_schema(2), EvalConfig::new(Variant::Gennari)).unwrap_err();
    assert!(matches!(err, TreeError::Eval(EvalError::NoContinuousAttributes)));
    let predicting = Schema::new(vec![AttributeSchema::discrete("a", ["0", "1"]).with_role(Role::Predicting)]).unwrap();
    let err = ConceptTree::new(predicting, EvalConfig::new(Variant::Asymmetric)).unwrap_err();
    assert!(matches!(err, TreeError::Eval(EvalError::EmptyPredictedSet)));
    assert!(ConceptTree::new(binary_schema(2), EvalConfig::new(Variant::Asymmetric)).is_ok());
}

#[test]
fn asymmetric_internal_nodes_carry_memory() {
    let mut rng = seeded_rng(9);
    let records: Vec<Record> = (0..80).map(|_| random_record(&mut rng, 0.0)).collect();
    let tree =
        ConceptTree::fit(&Dataset::new(mixed_schema(), records).unwrap(), EvalConfig::new(Variant::Asymmetric)).unwrap();
    let mut stack = vec![tree.root().unwrap()];
    while let Some(node) = stack.pop() {
        assert_eq!(node.memory.is_some(), !node.is_leaf());
        if let Some(m) = &node.memory {
            assert!(m.prev_predicted.values().all(|&p| p > 0.0 && p <= 1.0));
        }
        stack.extend(&node.children);
    }
}

#[test]
fn json_round_trip() {
    let mut rng = seeded_rng(11);
    let records: Vec<Record> = (0..60).map(|_| random_record(&mut rng, 0.15)).collect();
    let data = Dataset::new(mixed_schema(), records).unwrap();
    for config in [fisher(), EvalConfig::new(Variant::Asymmetric)] {
        let tree = ConceptTree::fit(&data, config).unwrap();
        let value = tree.to_json_value();
        assert_eq!(value["format"], TREE_FORMAT);
        let back = ConceptTree::from_json_str(&crate::canon::to_canonical_string(&value)).unwrap();
        assert_eq!(back, tree);
    }
    let err = ConceptTree::from_json_str(r#"{"format":"other"}"#).unwrap_err();
    assert!(matches!(err, TreeError::Json(_) | TreeError::Format(_)));
}

#[test]
fn audit_detects_tampering() {
    let tree = ConceptTree::fit(&all_functions_dataset(3), fisher()).unwrap();
    assert!(tree.audit().is_empty());
    let mut broken = tree.clone();
    if let Some(root) = broken.root.as_mut() {
        if let Tally::Discrete(c) = &mut root.children[1].tallies[0] {
            c[0] += 1;
        }
    }
    assert!(!broken.audit().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tallies_stay_consistent(seed in any::<u64>(), n in 1usize..120, missing in 0.0f64..0.5, variant in 0usize..4) {
        let config = match variant {
            0 => fisher(),
            1 => EvalConfig::new(Variant::Gennari).with_acuity(0.01),
            2 => EvalConfig::new(Variant::ScaleFree),
            _ => EvalConfig::new(Variant::Asymmetric),
        };
        let mut rng = seeded_rng(seed);
        let records: Vec<Record> = (0..n).map(|_| random_record(&mut rng, missing)).collect();
        let tree = ConceptTree::fit(&Dataset::new(mixed_schema(), records).unwrap(), config).unwrap();
        prop_assert!(tree.audit().is_empty(), "{:?}", tree.audit());
        prop_assert_eq!(tree.root().unwrap().count, n as u64);
        prop_assert_eq!(replay(tree.insertion_log()), tree.instance_paths());
    }
}
