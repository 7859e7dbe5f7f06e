//! Generated datasets survive a CSV and schema round trip unchanged.

use conceptforge::canon::to_canonical_string;
use conceptforge::data::{load_dataset, DataError, Dataset, Record, Value};
use conceptforge::synth::{generate, Generator, SyntheticSpec};

fn round_trip(data: &Dataset) -> Dataset {
    let csv = data.to_csv_string().unwrap();
    let schema = to_canonical_string(&data.schema().to_json_value());
    load_dataset(csv.as_bytes(), schema.as_bytes()).unwrap()
}

#[test]
fn every_generator_round_trips_exactly() {
    let generators = [
        Generator::IdealUniform { classes: 3, deltas: vec![0.1, 1.0, 10.0], n: 300, class_mass: Some(vec![1.0, 2.0, 3.0]) },
        Generator::TwoDensity { b: 1.0, a: 2.0, d1: 1.0, d2: 0.5, n: 300 },
        Generator::BivariateNormal { mu_x: -1.0, mu_y: 4.0, sigma_x: 0.3, sigma_y: 7.0, r: -0.4, n: 300 },
        Generator::BooleanDiagnostic { k: 4, n: 300 },
    ];
    for generator in generators {
        let data = generate(&SyntheticSpec::new(generator.clone(), 123)).unwrap();
        let back = round_trip(&data);
        assert_eq!(back.schema(), data.schema(), "{generator:?}");
        assert_eq!(back.records(), data.records(), "{generator:?}");
    }
}

#[test]
fn missing_entries_round_trip() {
    let data = generate(&SyntheticSpec::new(Generator::BooleanDiagnostic { k: 3, n: 8 }, 1)).unwrap();
    let mut records = data.records().to_vec();
    records[2].values[1] = Value::Missing;
    records[5] = Record::missing(records[5].values.len());
    let data = Dataset::new(data.schema().clone(), records).unwrap();
    let back = round_trip(&data);
    assert_eq!(back.records(), data.records());
    assert!(data.to_csv_string().unwrap().contains('?'));
}

#[test]
fn undeclared_value_is_reported_with_its_position() {
    let schema = r#"[{"name": "a", "kind": "discrete", "values": ["v1", "v2"]}]"#;
    match load_dataset("a\nv1\nv9\n".as_bytes(), schema.as_bytes()) {
        Err(DataError::UnknownValue { row, column, value }) => {
            assert_eq!((row, column.as_str(), value.as_str()), (2, "a", "v9"));
        }
        other => panic!("expected UnknownValue, got {other:?}"),
    }
}
