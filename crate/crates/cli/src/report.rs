//! Plain-text rendering of experiment reports.

use std::fmt::Write;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use conceptforge::lab::ExperimentReport;

use crate::Outcome;

/// Header line, one row per scalar, then one `check` row per check.
pub fn render(report: &ExperimentReport) -> String {
    let mut out = String::new();
    writeln!(out, "report {}", report.name).unwrap();
    let width = report.scalars.keys().map(String::len).max().unwrap_or(0);
    for (name, value) in &report.scalars {
        writeln!(out, "  {name:<width$}  {value:?}").unwrap();
    }
    for (name, check) in &report.checks {
        writeln!(
            out,
            "  check {name}: {:?} (expected {:?}, tolerance {:?}) {}",
            check.lhs,
            check.rhs,
            check.tolerance,
            if check.pass { "PASS" } else { "FAIL" }
        )
        .unwrap();
    }
    out
}

pub fn print_report(path: &Path) -> Result<Outcome> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: ExperimentReport =
        serde_json::from_str(&text).with_context(|| format!("malformed report {}", path.display()))?;
    print!("{}", render(&report));
    Ok(if report.all_pass() { Outcome::Done } else { Outcome::ChecksFailed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use conceptforge::lab::{uniform_ideal_experiment, Check, UniformParams};

    #[test]
    fn uniform_report_rows() {
        let report = uniform_ideal_experiment(&UniformParams { classes: 3, deltas: vec![1.0] }).unwrap();
        let text = render(&report);
        let row = text.lines().find(|l| l.starts_with("  check scalefree: ")).unwrap();
        assert!(row.ends_with("(expected 2.0, tolerance 1e-9) PASS"), "{row}");
        assert!(text.lines().any(|l| l.split_whitespace().eq(["expected_scalefree", "2.0"])));
    }

    #[test]
    fn empty_report_is_header_only() {
        let report = ExperimentReport::new("empty", serde_json::json!({}));
        assert_eq!(render(&report), "report empty\n");
    }

    #[test]
    fn failed_check_is_marked() {
        let mut report = ExperimentReport::new("x", serde_json::json!({}));
        report.check("c", Check::absolute(1.0, 0.0, 0.5));
        assert!(render(&report).ends_with("FAIL\n"));
    }
}
