//! Attribute schemas and their JSON representation.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::data::DataError;

/// How an attribute takes part in asymmetric evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Used to decide class membership only.
    Predicting,
    /// Read off the class only.
    Predicted,
    /// Both; split into a fine predicting copy and a coarse predicted copy.
    #[default]
    Both,
}

impl Role {
    pub fn is_predicting(self) -> bool {
        matches!(self, Role::Predicting | Role::Both)
    }

    pub fn is_predicted(self) -> bool {
        matches!(self, Role::Predicted | Role::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeKind {
    Discrete(Vec<String>),
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    pub role: Role,
    /// Weight of the attribute's predicted term in asymmetric evaluation.
    pub weight: f64,
    /// Declared probability that the attribute is observed. Estimated from
    /// data when absent.
    pub availability: Option<f64>,
    /// Value-merge map producing the coarse predicted copy. Identity when absent.
    pub predicted_grid: Option<BTreeMap<String, String>>,
}

impl AttributeSchema {
    pub fn discrete<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Discrete(values.into_iter().map(Into::into).collect()),
            role: Role::Both,
            weight: 1.0,
            availability: None,
            predicted_grid: None,
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Continuous,
            role: Role::Both,
            weight: 1.0,
            availability: None,
            predicted_grid: None,
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_availability(mut self, availability: f64) -> Self {
        self.availability = Some(availability);
        self
    }

    pub fn with_predicted_grid<K: Into<String>, V: Into<String>>(
        mut self,
        grid: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        self.predicted_grid = Some(grid.into_iter().map(|(k, v)| (k.into(), v.into())).collect());
        self
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, AttributeKind::Discrete(_))
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, AttributeKind::Continuous)
    }

    /// Declared values of a discrete attribute; empty for continuous ones.
    pub fn values(&self) -> &[String] {
        match &self.kind {
            AttributeKind::Discrete(values) => values,
            AttributeKind::Continuous => &[],
        }
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.values().iter().position(|v| v == value)
    }

    /// Coarse value list of the predicted copy and the fine→coarse index map.
    ///
    /// Coarse values are ordered by first appearance along the declared
    /// value order, so the identity grid reproduces the declared order.
    pub fn coarse_grid(&self) -> (Vec<String>, Vec<usize>) {
        let values = self.values();
        let Some(grid) = &self.predicted_grid else {
            return (values.to_vec(), (0..values.len()).collect());
        };
        let mut coarse: Vec<String> = Vec::new();
        let mut index = Vec::with_capacity(values.len());
        for v in values {
            let target = &grid[v];
            let pos = match coarse.iter().position(|c| c == target) {
                Some(p) => p,
                None => {
                    coarse.push(target.clone());
                    coarse.len() - 1
                }
            };
            index.push(pos);
        }
        (coarse, index)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::Schema(format!("attribute {:?}: {msg}", self.name)));
        if self.name.is_empty() {
            return Err(DataError::Schema("attribute with empty name".into()));
        }
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return bad(format!("weight must be a finite nonnegative number, got {}", self.weight));
        }
        if let Some(a) = self.availability {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("availability must lie in [0,1], got {a}"));
            }
        }
        match &self.kind {
            AttributeKind::Discrete(values) => {
                if values.is_empty() {
                    return bad("discrete value list is empty".into());
                }
                let mut seen = HashSet::new();
                for v in values {
                    if v == crate::data::MISSING_TOKEN {
                        return bad("the missing token \"?\" cannot be a declared value".into());
                    }
                    if !seen.insert(v) {
                        return bad(format!("duplicate value {v:?}"));
                    }
                }
                if let Some(grid) = &self.predicted_grid {
                    for v in values {
                        if !grid.contains_key(v) {
                            return bad(format!("predicted_grid does not map value {v:?}"));
                        }
                    }
                    for k in grid.keys() {
                        if !seen.contains(k) {
                            return bad(format!("predicted_grid maps undeclared value {k:?}"));
                        }
                    }
                }
            }
            AttributeKind::Continuous => {
                if self.predicted_grid.is_some() {
                    return bad("predicted_grid is only defined for discrete attributes".into());
                }
            }
        }
        Ok(())
    }
}

/// Ordered list of attribute schemas with unique names.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    attributes: Vec<AttributeSchema>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSchema>) -> Result<Self, DataError> {
        let mut names = HashSet::new();
        for a in &attributes {
            a.validate()?;
            if !names.insert(a.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate attribute name {:?}", a.name)));
            }
        }
        if attributes.is_empty() {
            return Err(DataError::Schema("schema declares no attributes".into()));
        }
        Ok(Self { attributes })
    }

    pub fn from_json_reader(reader: impl Read) -> Result<Self, DataError> {
        let raw: Vec<RawAttribute> = serde_json::from_reader(reader)?;
        Self::new(raw.into_iter().map(AttributeSchema::from).collect())
    }

    pub fn from_json_str(text: &str) -> Result<Self, DataError> {
        Self::from_json_reader(text.as_bytes())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let raw: Vec<RawAttribute> = self.attributes.iter().map(RawAttribute::from).collect();
        serde_json::to_value(raw).expect("schema serializes")
    }

    pub fn attributes(&self) -> &[AttributeSchema] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn get(&self, index: usize) -> &AttributeSchema {
        &self.attributes[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }
}

impl Serialize for Schema {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<RawAttribute> = self.attributes.iter().map(RawAttribute::from).collect();
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<RawAttribute>::deserialize(deserializer)?;
        Schema::new(raw.into_iter().map(AttributeSchema::from).collect()).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Discrete,
    Continuous,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttribute {
    name: String,
    kind: RawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<String>>,
    #[serde(default)]
    role: Role,
    #[serde(default = "default_weight")]
    weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    availability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicted_grid: Option<BTreeMap<String, String>>,
}

impl From<RawAttribute> for AttributeSchema {
    fn from(raw: RawAttribute) -> Self {
        let kind = match raw.kind {
            RawKind::Discrete => AttributeKind::Discrete(raw.values.unwrap_or_default()),
            RawKind::Continuous => AttributeKind::Continuous,
        };
        AttributeSchema {
            name: raw.name,
            kind,
            role: raw.role,
            weight: raw.weight,
            availability: raw.availability,
            predicted_grid: raw.predicted_grid,
        }
    }
}

impl From<&AttributeSchema> for RawAttribute {
    fn from(a: &AttributeSchema) -> Self {
        let (kind, values) = match &a.kind {
            AttributeKind::Discrete(v) => (RawKind::Discrete, Some(v.clone())),
            AttributeKind::Continuous => (RawKind::Continuous, None),
        };
        RawAttribute {
            name: a.name.clone(),
            kind,
            values,
            role: a.role,
            weight: a.weight,
            availability: a.availability,
            predicted_grid: a.predicted_grid.clone(),
        }
    }
}
