//! Incremental concept hierarchy. Each record descends from the root; at
//! every internal node it joins the child, or starts the new child, that
//! maximizes the configured criterion over the resulting sibling partition.
//! A leaf either absorbs the record or splits into its old contents and the
//! record, whichever scores higher.

mod scorer;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Record, Value};
use crate::eval::{
    asymmetric_eval, build_predictors, symmetric_eval, EvalConfig, EvalError, RoleSplit, StepMemory, Variant,
};
use crate::schema::{AttributeKind, Schema};
use crate::stats::{ColumnStats, ContingencyTable, MomentColumn, Moments, PartitionStats};

use scorer::{candidate_scores, pick, Plan};

pub const TREE_FORMAT: &str = "conceptforge-tree/1";

/// Relative slack under which two candidate scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("record does not match the schema: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("the tree is empty")]
    EmptyTree,
    #[error("node is a leaf")]
    LeafNode,
    #[error("no node at path {0:?}")]
    InvalidPath(Vec<usize>),
    #[error("malformed tree document: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-attribute sufficient statistics of a node.
#[derive(Debug, Clone, PartialEq)]
pub enum Tally {
    /// Count per declared value.
    Discrete(Vec<u64>),
    Continuous(Moments),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptNode {
    pub count: u64,
    pub tallies: Vec<Tally>,
    pub children: Vec<ConceptNode>,
    /// Asymmetric criterion only; set on internal nodes.
    pub memory: Option<StepMemory>,
    /// Ids of the incorporated records held by a leaf.
    pub instances: Vec<usize>,
}

impl ConceptNode {
    pub fn empty(schema: &Schema) -> Self {
        let tallies = schema
            .attributes()
            .iter()
            .map(|a| match &a.kind {
                AttributeKind::Discrete(values) => Tally::Discrete(vec![0; values.len()]),
                AttributeKind::Continuous => Tally::Continuous(Moments::default()),
            })
            .collect();
        Self { count: 0, tallies, children: Vec::new(), memory: None, instances: Vec::new() }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Adds `record` to this node's statistics only.
    pub fn absorb(&mut self, record: &Record) {
        self.count += 1;
        for (tally, value) in self.tallies.iter_mut().zip(&record.values) {
            match (tally, value) {
                (Tally::Discrete(counts), Value::Discrete(v)) => counts[*v] += 1,
                (Tally::Continuous(m), Value::Continuous(x)) => m.push(*x),
                _ => {}
            }
        }
    }

    fn leaf(schema: &Schema, record: &Record, id: usize) -> Self {
        let mut node = Self::empty(schema);
        node.absorb(record);
        node.instances.push(id);
        node
    }

    /// Partition statistics over this node's children, one column per
    /// schema attribute.
    pub fn partition_stats(&self, schema: &Schema) -> Result<PartitionStats, TreeError> {
        if self.is_leaf() {
            return Err(TreeError::LeafNode);
        }
        let columns = schema
            .attributes()
            .iter()
            .enumerate()
            .map(|(j, a)| match &a.kind {
                AttributeKind::Discrete(values) => ColumnStats::Discrete(ContingencyTable::new(
                    values.clone(),
                    self.children
                        .iter()
                        .map(|c| match &c.tallies[j] {
                            Tally::Discrete(counts) => counts.clone(),
                            Tally::Continuous(_) => unreachable!("tally kinds follow the schema"),
                        })
                        .collect(),
                )),
                AttributeKind::Continuous => ColumnStats::Continuous(MomentColumn {
                    per_class: self
                        .children
                        .iter()
                        .map(|c| match &c.tallies[j] {
                            Tally::Continuous(m) => *m,
                            Tally::Discrete(_) => unreachable!("tally kinds follow the schema"),
                        })
                        .collect(),
                }),
            })
            .collect();
        Ok(PartitionStats::from_parts(
            schema.names().map(str::to_string).collect(),
            self.children.iter().map(|c| c.count).collect(),
            columns,
        )?)
    }
}

/// One decision taken while incorporating a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    /// The tree was empty; the record became the root leaf.
    Root,
    /// Joined existing child `index` of an internal node.
    Child { index: usize },
    /// Started child `index` of an internal node as a singleton leaf.
    NewChild { index: usize },
    /// A leaf took the record in.
    Absorb,
    /// A leaf became internal: old contents as child 0, the record as child 1.
    SplitLeaf,
}

/// Value emitted for a predicted attribute.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PredictedValue {
    Discrete(String),
    Continuous(f64),
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    /// Child indices from the root to the stopping node.
    pub path: Vec<usize>,
    /// Per predicted attribute, in schema order.
    pub values: Vec<(String, PredictedValue)>,
}

/// A violated tally invariant found by [`ConceptTree::audit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditViolation {
    pub path: Vec<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptTree {
    schema: Schema,
    config: EvalConfig,
    root: Option<ConceptNode>,
    insertion_log: Vec<Vec<Step>>,
    objects: usize,
}

impl ConceptTree {
    pub fn new(schema: Schema, config: EvalConfig) -> Result<Self, TreeError> {
        config.validate()?;
        let availability = vec![1.0; schema.len()];
        Plan::new(&schema, &config, &availability)?;
        Ok(Self { schema, config, root: None, insertion_log: Vec::new(), objects: 0 })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn root(&self) -> Option<&ConceptNode> {
        self.root.as_ref()
    }

    pub fn insertion_log(&self) -> &[Vec<Step>] {
        &self.insertion_log
    }

    pub fn clear_log(&mut self) {
        self.insertion_log.clear();
    }

    /// Number of records incorporated so far.
    pub fn objects(&self) -> usize {
        self.objects
    }

    pub fn node(&self, path: &[usize]) -> Result<&ConceptNode, TreeError> {
        let mut node = self.root.as_ref().ok_or(TreeError::EmptyTree)?;
        for &i in path {
            node = node.children.get(i).ok_or_else(|| TreeError::InvalidPath(path.to_vec()))?;
        }
        Ok(node)
    }

    /// Declared availability, else the observed fraction at the root.
    pub fn availability(&self) -> Vec<f64> {
        self.schema
            .attributes()
            .iter()
            .enumerate()
            .map(|(j, a)| {
                a.availability.unwrap_or_else(|| match &self.root {
                    Some(root) if root.count > 0 => {
                        let observed = match &root.tallies[j] {
                            Tally::Discrete(c) => c.iter().sum(),
                            Tally::Continuous(m) => m.count,
                        };
                        observed as f64 / root.count as f64
                    }
                    _ => 1.0,
                })
            })
            .collect()
    }

    fn plan(&self) -> Plan {
        Plan::new(&self.schema, &self.config, &self.availability()).expect("plan validated at construction")
    }

    /// Scores of placing `record` in each child of the node at `path`, with
    /// a new singleton child last. At a leaf the two entries are absorbing
    /// and splitting.
    pub fn candidate_scores(&self, path: &[usize], record: &Record) -> Result<Vec<f64>, TreeError> {
        record.conforms(&self.schema).map_err(TreeError::SchemaMismatch)?;
        let node = self.node(path)?;
        let classes = class_tallies(node);
        let plan = self.plan();
        Ok(candidate_scores(&classes, record, &plan, &self.config, node.memory.as_ref())
            .into_iter()
            .map(|c| c.score)
            .collect())
    }

    /// Criterion value of the partition formed by `node`'s children,
    /// rebuilt from scratch through the evaluation module.
    pub fn partition_eval(&self, node: &ConceptNode) -> Result<f64, TreeError> {
        let stats = node.partition_stats(&self.schema)?;
        match self.config.variant {
            Variant::Asymmetric => {
                let split = RoleSplit::with_availability(&stats, &self.schema, &self.availability())?;
                let maps = build_predictors(&split);
                Ok(asymmetric_eval(&split, &maps, node.memory.as_ref(), &self.config.asym)?.0)
            }
            _ => {
                let Plan::Symmetric { attrs } = self.plan() else { unreachable!("plan follows the variant") };
                Ok(symmetric_eval(&stats.select(&attrs), &self.config)?)
            }
        }
    }

    pub fn incorporate(&mut self, record: &Record) -> Result<(), TreeError> {
        record.conforms(&self.schema).map_err(TreeError::SchemaMismatch)?;
        let id = self.objects;
        let Some(_) = self.root else {
            self.root = Some(ConceptNode::leaf(&self.schema, record, id));
            self.insertion_log.push(vec![Step::Root]);
            self.objects += 1;
            return Ok(());
        };
        let plan = self.plan();
        let config = self.config;
        let schema = &self.schema;
        let mut steps = Vec::new();
        let mut node = self.root.as_mut().expect("checked above");
        loop {
            let chosen = {
                let classes = class_tallies(node);
                let candidates = candidate_scores(&classes, record, &plan, &config, node.memory.as_ref());
                let scores: Vec<f64> = candidates.iter().map(|c| c.score).collect();
                let i = pick(&scores, TIE_TOLERANCE);
                (i, candidates[i].memory.clone())
            };
            let (i, memory) = chosen;
            if node.is_leaf() {
                let old = node.clone();
                node.absorb(record);
                if i == 0 {
                    node.instances.push(id);
                    steps.push(Step::Absorb);
                } else {
                    node.instances.clear();
                    node.children = vec![old, ConceptNode::leaf(schema, record, id)];
                    node.memory = memory;
                    steps.push(Step::SplitLeaf);
                }
                break;
            }
            node.absorb(record);
            node.memory = memory;
            if i == node.children.len() {
                node.children.push(ConceptNode::leaf(schema, record, id));
                steps.push(Step::NewChild { index: i });
                break;
            }
            steps.push(Step::Child { index: i });
            node = &mut node.children[i];
        }
        self.insertion_log.push(steps);
        self.objects += 1;
        Ok(())
    }

    /// Builds a tree from `dataset` in record order.
    pub fn fit(dataset: &Dataset, config: EvalConfig) -> Result<Self, TreeError> {
        let mut tree = Self::new(dataset.schema().clone(), config)?;
        for record in dataset.records() {
            tree.incorporate(record)?;
        }
        Ok(tree)
    }

    /// Descends without mutating the tree, at each level into the child
    /// whose hypothetical incorporation of `partial` scores highest.
    /// Attributes with role `predicted` are ignored on input. Stops at a
    /// leaf or where every child scores the same.
    pub fn predict(&self, partial: &Record) -> Result<Prediction, TreeError> {
        partial.conforms(&self.schema).map_err(TreeError::SchemaMismatch)?;
        let root = self.root.as_ref().ok_or(TreeError::EmptyTree)?;
        let mut input = partial.clone();
        for (value, attr) in input.values.iter_mut().zip(self.schema.attributes()) {
            if !attr.role.is_predicting() {
                *value = Value::Missing;
            }
        }
        let plan = self.plan();
        let mut path = Vec::new();
        let mut trail = vec![root];
        let mut node = root;
        while !node.is_leaf() {
            let classes = class_tallies(node);
            let mut scores: Vec<f64> = candidate_scores(&classes, &input, &plan, &self.config, node.memory.as_ref())
                .into_iter()
                .map(|c| c.score)
                .collect();
            scores.pop();
            let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let worst = scores.iter().copied().fold(f64::INFINITY, f64::min);
            if best - worst <= TIE_TOLERANCE * best.abs().max(1.0) {
                break;
            }
            let i = pick(&scores, TIE_TOLERANCE);
            path.push(i);
            node = &node.children[i];
            trail.push(node);
        }
        let values = self
            .schema
            .attributes()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role.is_predicted())
            .map(|(j, a)| {
                let informed = trail.iter().rev().find(|n| match &n.tallies[j] {
                    Tally::Discrete(c) => c.iter().any(|&x| x > 0),
                    Tally::Continuous(m) => m.count > 0,
                });
                let value = match informed.map(|n| &n.tallies[j]) {
                    None => PredictedValue::Missing,
                    Some(Tally::Continuous(m)) => PredictedValue::Continuous(m.mean),
                    Some(Tally::Discrete(counts)) => {
                        let (coarse_values, map) = a.coarse_grid();
                        let mut coarse = vec![0u64; coarse_values.len()];
                        for (v, &c) in counts.iter().enumerate() {
                            coarse[map[v]] += c;
                        }
                        let best = coarse.iter().copied().max().unwrap_or(0);
                        let k = coarse.iter().position(|&c| c == best).unwrap_or(0);
                        PredictedValue::Discrete(coarse_values[k].clone())
                    }
                };
                (a.name.clone(), value)
            })
            .collect();
        Ok(Prediction { path, values })
    }

    /// Path to the leaf holding each incorporated record, indexed by id.
    pub fn instance_paths(&self) -> Vec<Vec<usize>> {
        let mut paths = vec![Vec::new(); self.objects];
        let Some(root) = &self.root else { return paths };
        let mut stack = vec![(root, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            for &id in &node.instances {
                if let Some(slot) = paths.get_mut(id) {
                    *slot = path.clone();
                }
            }
            for (i, child) in node.children.iter().enumerate() {
                let mut p = path.clone();
                p.push(i);
                stack.push((child, p));
            }
        }
        paths
    }

    /// Walks every node and reports tally inconsistencies. Discrete counts
    /// and all record counts must match exactly; merged continuous moments
    /// must match within `1e-9` relative.
    pub fn audit(&self) -> Vec<AuditViolation> {
        let mut out = Vec::new();
        let Some(root) = &self.root else {
            if self.objects != 0 {
                out.push(AuditViolation { path: vec![], message: "objects recorded but no root".into() });
            }
            return out;
        };
        if root.count != self.objects as u64 {
            out.push(AuditViolation {
                path: vec![],
                message: format!("root count {} but {} objects", root.count, self.objects),
            });
        }
        if !self.insertion_log.is_empty() && self.insertion_log.len() != self.objects {
            out.push(AuditViolation {
                path: vec![],
                message: format!("{} log entries for {} objects", self.insertion_log.len(), self.objects),
            });
        }
        let mut stack = vec![(root, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            let mut flag = |message: String| out.push(AuditViolation { path: path.clone(), message });
            if node.is_leaf() {
                if node.instances.len() as u64 != node.count {
                    flag(format!("leaf holds {} instances but counts {}", node.instances.len(), node.count));
                }
            } else {
                if !node.instances.is_empty() {
                    flag("internal node holds instances".into());
                }
                let sum: u64 = node.children.iter().map(|c| c.count).sum();
                if sum != node.count {
                    flag(format!("count {} but children sum to {sum}", node.count));
                }
                for (j, tally) in node.tallies.iter().enumerate() {
                    let name = &self.schema.get(j).name;
                    match tally {
                        Tally::Discrete(counts) => {
                            let mut summed = vec![0u64; counts.len()];
                            for c in &node.children {
                                if let Tally::Discrete(cc) = &c.tallies[j] {
                                    summed.iter_mut().zip(cc).for_each(|(s, x)| *s += x);
                                }
                            }
                            if &summed != counts {
                                flag(format!("{name}: counts {counts:?} but children sum to {summed:?}"));
                            }
                        }
                        Tally::Continuous(m) => {
                            let merged = node.children.iter().fold(Moments::default(), |acc, c| match &c.tallies[j] {
                                Tally::Continuous(cm) => acc.merge(cm),
                                Tally::Discrete(_) => acc,
                            });
                            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
                            if merged.count != m.count || !close(merged.mean, m.mean) || !close(merged.m2, m.m2) {
                                flag(format!("{name}: moments {m:?} but children merge to {merged:?}"));
                            }
                        }
                    }
                }
            }
            for (i, child) in node.children.iter().enumerate() {
                let mut p = path.clone();
                p.push(i);
                stack.push((child, p));
            }
        }
        out
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mut nodes = Vec::new();
        if let Some(root) = &self.root {
            flatten(root, &self.schema, &mut nodes);
        }
        serde_json::to_value(TreeDocument {
            format: TREE_FORMAT.to_string(),
            schema: self.schema.clone(),
            config: self.config,
            objects: self.objects,
            insertion_log: self.insertion_log.clone(),
            nodes,
        })
        .expect("tree documents serialize")
    }

    pub fn from_json_str(text: &str) -> Result<Self, TreeError> {
        let doc: TreeDocument = serde_json::from_str(text)?;
        if doc.format != TREE_FORMAT {
            return Err(TreeError::Format(format!("unsupported format {:?}", doc.format)));
        }
        let root = if doc.nodes.is_empty() { None } else { Some(unflatten(&doc.nodes, 0, &doc.schema, 0)?) };
        let mut tree = Self::new(doc.schema, doc.config)?;
        tree.root = root;
        tree.insertion_log = doc.insertion_log;
        tree.objects = doc.objects;
        Ok(tree)
    }
}

fn class_tallies(node: &ConceptNode) -> Vec<&[Tally]> {
    if node.is_leaf() {
        vec![&node.tallies]
    } else {
        node.children.iter().map(|c| c.tallies.as_slice()).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDocument {
    format: String,
    schema: Schema,
    config: EvalConfig,
    objects: usize,
    insertion_log: Vec<Vec<Step>>,
    /// Pre-order; `nodes[0]` is the root.
    nodes: Vec<NodeDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TallyDocument {
    Discrete { counts: BTreeMap<String, u64> },
    Continuous { count: u64, mean: f64, m2: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDocument {
    count: u64,
    tallies: BTreeMap<String, TallyDocument>,
    children: Vec<usize>,
    memory: Option<StepMemory>,
    instances: Vec<usize>,
}

fn flatten(node: &ConceptNode, schema: &Schema, out: &mut Vec<NodeDocument>) {
    let at = out.len();
    let tallies = schema
        .attributes()
        .iter()
        .zip(&node.tallies)
        .map(|(a, t)| {
            let doc = match t {
                Tally::Discrete(counts) => TallyDocument::Discrete {
                    counts: a.values().iter().cloned().zip(counts.iter().copied()).collect(),
                },
                Tally::Continuous(m) => TallyDocument::Continuous { count: m.count, mean: m.mean, m2: m.m2 },
            };
            (a.name.clone(), doc)
        })
        .collect();
    out.push(NodeDocument {
        count: node.count,
        tallies,
        children: Vec::new(),
        memory: node.memory.clone(),
        instances: node.instances.clone(),
    });
    for child in &node.children {
        let id = out.len();
        out[at].children.push(id);
        flatten(child, schema, out);
    }
}

fn unflatten(nodes: &[NodeDocument], at: usize, schema: &Schema, depth: usize) -> Result<ConceptNode, TreeError> {
    let bad = |m: String| TreeError::Format(m);
    if depth > nodes.len() {
        return Err(bad("node graph has a cycle".into()));
    }
    let doc = nodes.get(at).ok_or_else(|| bad(format!("missing node {at}")))?;
    let mut tallies = Vec::with_capacity(schema.len());
    for a in schema.attributes() {
        let t = doc.tallies.get(&a.name).ok_or_else(|| bad(format!("node {at} lacks tally {:?}", a.name)))?;
        tallies.push(match (&a.kind, t) {
            (AttributeKind::Discrete(values), TallyDocument::Discrete { counts }) => {
                if counts.len() != values.len() || values.iter().any(|v| !counts.contains_key(v)) {
                    return Err(bad(format!("node {at}: counts of {:?} do not match its values", a.name)));
                }
                Tally::Discrete(values.iter().map(|v| counts[v]).collect())
            }
            (AttributeKind::Continuous, TallyDocument::Continuous { count, mean, m2 }) => {
                Tally::Continuous(Moments { count: *count, mean: *mean, m2: *m2 })
            }
            _ => return Err(bad(format!("node {at}: tally kind of {:?} does not match the schema", a.name))),
        });
    }
    if doc.tallies.len() != schema.len() {
        return Err(bad(format!("node {at} has tallies for unknown attributes")));
    }
    let children = doc
        .children
        .iter()
        .map(|&c| {
            if c <= at {
                Err(bad(format!("node {at} lists child {c} out of pre-order")))
            } else {
                unflatten(nodes, c, schema, depth + 1)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(ConceptNode {
        count: doc.count,
        tallies,
        children,
        memory: doc.memory.clone(),
        instances: doc.instances.clone(),
    })
}

#[cfg(test)]
mod tests;
