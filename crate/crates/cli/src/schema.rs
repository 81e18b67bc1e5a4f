//! Validation of analysis reports against the shipped JSON schema, plus the
//! cross-field rules a schema cannot express.

use std::sync::OnceLock;

use jsonschema::Validator;
use serde_json::Value;

use crate::report::AnalysisReport;

/// The versioned report schema, as shipped in `schema/`.
pub const REPORT_SCHEMA: &str = include_str!("../schema/analysis-report.v1.json");

fn validator() -> &'static Validator {
    static V: OnceLock<Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: Value = serde_json::from_str(REPORT_SCHEMA).expect("schema is valid JSON");
        jsonschema::validator_for(&schema).expect("schema compiles")
    })
}

/// Checks a report document. Returns every problem found.
pub fn validate(doc: &Value) -> Result<AnalysisReport, Vec<String>> {
    let errors: Vec<String> = validator()
        .iter_errors(doc)
        .map(|e| format!("{}: {}", e.instance_path(), e))
        .collect();
    if !errors.is_empty() {
        return Err(errors);
    }
    let report: AnalysisReport = serde_json::from_value(doc.clone()).map_err(|e| vec![e.to_string()])?;
    let mut errors = Vec::new();
    let listed: Vec<_> = report.results.iter().map(|r| r.method).collect();
    if listed != report.config.methods {
        errors.push(format!(
            "results list methods {:?} but config requested {:?}",
            listed, report.config.methods
        ));
    }
    for r in &report.results {
        if let Some(i) = &r.interval {
            if !(i.lower <= i.estimate && i.estimate <= i.upper) {
                errors.push(format!("{}: interval does not bracket its estimate", r.method.as_str()));
            }
        }
    }
    if errors.is_empty() {
        Ok(report)
    } else {
        Err(errors)
    }
}

pub fn validate_str(text: &str) -> Result<AnalysisReport, Vec<String>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| vec![format!("not JSON: {e}")])?;
    validate(&doc)
}
