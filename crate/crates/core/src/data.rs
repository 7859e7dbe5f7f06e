//! Records, datasets and CSV ingestion.

use std::io::{Read, Write};

use thiserror::Error;

use crate::schema::{AttributeKind, AttributeSchema, Role, Schema};

/// Token marking a missing entry in CSV files.
pub const MISSING_TOKEN: &str = "?";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("row {row}, column {column:?}: value {value:?} is not among the declared values")]
    UnknownValue { row: usize, column: String, value: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    ArityMismatch { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column:?}: {message}")]
    ParseFailure { row: usize, column: String, message: String },
    #[error("CSV header does not match the schema: {0}")]
    HeaderMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record {row} does not conform to the schema: {message}")]
    RecordMismatch { row: usize, message: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One slot of a record. Discrete values are indices into the attribute's
/// declared value list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Missing,
    Discrete(usize),
    Continuous(f64),
}

impl Value {
    pub fn is_missing(self) -> bool {
        matches!(self, Value::Missing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub values: Vec<Value>,
}

impl Record {
    pub fn new(values: Vec<Value>) -> Self {
        Self { values }
    }

    pub fn missing(len: usize) -> Self {
        Self { values: vec![Value::Missing; len] }
    }

    /// Checks slot count and kinds against `schema`.
    pub fn conforms(&self, schema: &Schema) -> Result<(), String> {
        if self.values.len() != schema.len() {
            return Err(format!("{} slots for {} attributes", self.values.len(), schema.len()));
        }
        for (value, attr) in self.values.iter().zip(schema.attributes()) {
            match (value, &attr.kind) {
                (Value::Missing, _) => {}
                (Value::Discrete(i), AttributeKind::Discrete(values)) if *i < values.len() => {}
                (Value::Continuous(x), AttributeKind::Continuous) if x.is_finite() => {}
                _ => return Err(format!("slot for {:?} holds {value:?}", attr.name)),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    records: Vec<Record>,
}

/// Whether a CSV header must name every schema attribute or may name a subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeaderPolicy {
    Exact,
    Subset,
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<Record>) -> Result<Self, DataError> {
        for (i, r) in records.iter().enumerate() {
            r.conforms(&schema)
                .map_err(|message| DataError::RecordMismatch { row: i + 1, message })?;
        }
        Ok(Self { schema, records })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Column of discrete value indices for `attribute`; `None` where missing.
    pub fn discrete_column(&self, attribute: usize) -> Vec<Option<usize>> {
        self.records
            .iter()
            .map(|r| match r.values[attribute] {
                Value::Discrete(v) => Some(v),
                _ => None,
            })
            .collect()
    }

    /// Writes the dataset as CSV with a header row and `?` for missing entries.
    pub fn write_csv(&self, writer: impl Write) -> Result<(), DataError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(self.schema.names())?;
        for record in &self.records {
            let row: Vec<String> = record
                .values
                .iter()
                .zip(self.schema.attributes())
                .map(|(v, a)| format_value(*v, a))
                .collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, DataError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// Replaces a continuous attribute by a discrete one with values
    /// `bin0..binN`, where `edges` are the strictly increasing inner cut points.
    pub fn discretize(&self, attribute: &str, edges: &[f64]) -> Result<Dataset, DataError> {
        let idx = self
            .schema
            .index_of(attribute)
            .ok_or_else(|| DataError::UnknownAttribute(attribute.to_string()))?;
        let old = self.schema.get(idx);
        if !old.is_continuous() {
            return Err(DataError::Schema(format!("{attribute:?} is not continuous")));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(DataError::Schema("bin edges must be finite and strictly increasing".into()));
        }
        let labels: Vec<String> = (0..=edges.len()).map(|i| format!("bin{i}")).collect();
        let mut attrs = self.schema.attributes().to_vec();
        attrs[idx] = AttributeSchema {
            kind: AttributeKind::Discrete(labels),
            predicted_grid: None,
            ..old.clone()
        };
        let schema = Schema::new(attrs)?;
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut values = r.values.clone();
                if let Value::Continuous(x) = values[idx] {
                    values[idx] = Value::Discrete(edges.partition_point(|e| *e <= x));
                }
                Record::new(values)
            })
            .collect();
        Dataset::new(schema, records)
    }
}

fn format_value(value: Value, attr: &AttributeSchema) -> String {
    match value {
        Value::Missing => MISSING_TOKEN.to_string(),
        Value::Discrete(i) => attr.values()[i].clone(),
        Value::Continuous(x) => format!("{x}"),
    }
}

/// Parses a dataset from CSV and a JSON schema. The CSV header must name
/// exactly the schema's attributes, in any order.
pub fn load_dataset(csv_source: impl Read, schema_source: impl Read) -> Result<Dataset, DataError> {
    let schema = Schema::from_json_reader(schema_source)?;
    read_csv(csv_source, schema, HeaderPolicy::Exact)
}

/// Parses CSV rows against an already validated schema.
///
/// With [`HeaderPolicy::Subset`] absent attributes become missing in every
/// record, which is how partial records for prediction are read.
pub fn read_csv(csv_source: impl Read, schema: Schema, policy: HeaderPolicy) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_source);
    let header = reader.headers()?.clone();

    let mut columns = Vec::with_capacity(header.len());
    let mut seen = vec![false; schema.len()];
    for name in header.iter() {
        let idx = schema
            .index_of(name)
            .ok_or_else(|| DataError::HeaderMismatch(format!("column {name:?} is not in the schema")))?;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(DataError::HeaderMismatch(format!("column {name:?} appears twice")));
        }
        columns.push(idx);
    }
    if policy == HeaderPolicy::Exact {
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(DataError::HeaderMismatch(format!(
                "schema attribute {:?} has no column",
                schema.get(missing).name
            )));
        }
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        if row.len() != header.len() {
            return Err(DataError::ArityMismatch { row: row_no, expected: header.len(), found: row.len() });
        }
        let mut values = vec![Value::Missing; schema.len()];
        for (field, &idx) in row.iter().zip(&columns) {
            values[idx] = parse_field(field, schema.get(idx), row_no)?;
        }
        records.push(Record::new(values));
    }
    Ok(Dataset { schema, records })
}

fn parse_field(field: &str, attr: &AttributeSchema, row: usize) -> Result<Value, DataError> {
    if field == MISSING_TOKEN {
        return Ok(Value::Missing);
    }
    match &attr.kind {
        AttributeKind::Discrete(_) => attr.value_index(field).map(Value::Discrete).ok_or_else(|| {
            DataError::UnknownValue { row, column: attr.name.clone(), value: field.to_string() }
        }),
        AttributeKind::Continuous => match field.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::Continuous(x)),
            Ok(_) => Err(DataError::ParseFailure {
                row,
                column: attr.name.clone(),
                message: format!("non-finite number {field:?}"),
            }),
            Err(e) => Err(DataError::ParseFailure {
                row,
                column: attr.name.clone(),
                message: format!("cannot parse {field:?} as a number: {e}"),
            }),
        },
    }
}

/// Fraction of non-missing entries per attribute.
pub fn estimate_availability(dataset: &Dataset) -> Result<Vec<f64>, DataError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let n = dataset.len() as f64;
    Ok((0..dataset.schema().len())
        .map(|j| dataset.records().iter().filter(|r| !r.values[j].is_missing()).count() as f64 / n)
        .collect())
}

/// Declared availability where the schema gives one, the estimate otherwise.
pub fn resolved_availability(dataset: &Dataset) -> Result<Vec<f64>, DataError> {
    let estimated = estimate_availability(dataset)?;
    Ok(dataset
        .schema()
        .attributes()
        .iter()
        .zip(estimated)
        .map(|(a, est)| a.availability.unwrap_or(est))
        .collect())
}

/// Indices of attributes whose role is not purely predicted.
pub fn clustering_attributes(schema: &Schema) -> Vec<usize> {
    schema
        .attributes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.role != Role::Predicted)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"[
        {"name":"shape","kind":"discrete","values":["v1","v2","v3","v4","v5","v6"]},
        {"name":"size","kind":"continuous"}
    ]"#;

    #[test]
    fn loads_well_formed_rows() {
        let csv = "shape,size\nv1,0.5\nv6,1.25\nv3,-2\n";
        let ds = load_dataset(csv.as_bytes(), SCHEMA.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.records()[1].values, vec![Value::Discrete(5), Value::Continuous(1.25)]);
    }

    #[test]
    fn header_order_is_free() {
        let csv = "size,shape\n0.5,v2\n";
        let ds = load_dataset(csv.as_bytes(), SCHEMA.as_bytes()).unwrap();
        assert_eq!(ds.records()[0].values, vec![Value::Discrete(1), Value::Continuous(0.5)]);
    }

    #[test]
    fn question_mark_is_missing() {
        let csv = "shape,size\nv1,?\n?,3\n";
        let ds = load_dataset(csv.as_bytes(), SCHEMA.as_bytes()).unwrap();
        assert_eq!(ds.records()[0].values[1], Value::Missing);
        assert_eq!(ds.records()[1].values[0], Value::Missing);
    }

    #[test]
    fn undeclared_value_names_row_and_column() {
        let csv = "shape,size\nv1,1\nv9,2\n";
        match load_dataset(csv.as_bytes(), SCHEMA.as_bytes()) {
            Err(DataError::UnknownValue { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "shape", "v9"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn arity_and_parse_errors() {
        let short = "shape,size\nv1\n";
        assert!(matches!(
            load_dataset(short.as_bytes(), SCHEMA.as_bytes()),
            Err(DataError::ArityMismatch { row: 1, expected: 2, found: 1 })
        ));
        let bad = "shape,size\nv1,abc\n";
        assert!(matches!(
            load_dataset(bad.as_bytes(), SCHEMA.as_bytes()),
            Err(DataError::ParseFailure { row: 1, .. })
        ));
        let header = "shape,weight\nv1,1\n";
        assert!(matches!(
            load_dataset(header.as_bytes(), SCHEMA.as_bytes()),
            Err(DataError::HeaderMismatch(_))
        ));
    }

    #[test]
    fn subset_header_fills_missing() {
        let schema = Schema::from_json_str(SCHEMA).unwrap();
        let ds = read_csv("size\n4.0\n".as_bytes(), schema, HeaderPolicy::Subset).unwrap();
        assert_eq!(ds.records()[0].values, vec![Value::Missing, Value::Continuous(4.0)]);
    }

    #[test]
    fn availability_counts_non_missing() {
        let schema = Schema::from_json_str(SCHEMA).unwrap();
        let records = (0..100)
            .map(|i| {
                let size = if i < 25 { Value::Missing } else { Value::Continuous(i as f64) };
                Record::new(vec![Value::Discrete(0), size])
            })
            .collect();
        let ds = Dataset::new(schema.clone(), records).unwrap();
        assert_eq!(estimate_availability(&ds).unwrap(), vec![1.0, 0.75]);

        let all_missing = Dataset::new(schema.clone(), vec![Record::missing(2); 4]).unwrap();
        assert_eq!(estimate_availability(&all_missing).unwrap(), vec![0.0, 0.0]);

        let empty = Dataset::new(schema, vec![]).unwrap();
        assert!(matches!(estimate_availability(&empty), Err(DataError::EmptyDataset)));
    }

    #[test]
    fn declared_availability_wins() {
        let schema = Schema::new(vec![AttributeSchema::continuous("x").with_availability(0.3)]).unwrap();
        let ds = Dataset::new(schema, vec![Record::new(vec![Value::Continuous(1.0)])]).unwrap();
        assert_eq!(estimate_availability(&ds).unwrap(), vec![1.0]);
        assert_eq!(resolved_availability(&ds).unwrap(), vec![0.3]);
    }

    #[test]
    fn discretize_bins_values() {
        let schema = Schema::new(vec![AttributeSchema::continuous("x")]).unwrap();
        let records = [-1.0, 0.0, 0.5, 2.0]
            .iter()
            .map(|&x| Record::new(vec![Value::Continuous(x)]))
            .chain(std::iter::once(Record::missing(1)))
            .collect();
        let ds = Dataset::new(schema, records).unwrap();
        let binned = ds.discretize("x", &[0.0, 1.0]).unwrap();
        assert_eq!(binned.schema().get(0).values(), ["bin0", "bin1", "bin2"]);
        assert_eq!(binned.discrete_column(0), vec![Some(0), Some(1), Some(1), Some(2), None]);
    }
}
