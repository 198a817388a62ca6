//! Versioned evaluation report and its validator.

use super::config::EvalConfig;
use super::HarnessError;
use crate::dsp::MetricsReport;
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub schema_version: u32,
    pub seed: u64,
    pub eval: EvalConfig,
    pub reports: Vec<MetricsReport>,
}

fn schema(msg: impl Into<String>) -> HarnessError {
    HarnessError::Data(format!("report schema: {}", msg.into()))
}

/// Parses a report, refusing other schema versions and reports whose group
/// rows are inconsistent with their subject rows.
pub fn validate_report(text: &str) -> Result<ReportFile, HarnessError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == REPORT_SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(schema(format!("version {v} is not supported (expected {REPORT_SCHEMA_VERSION})"))),
        None => return Err(schema("missing schema_version")),
    }
    let report: ReportFile = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
    for r in &report.reports {
        let n: usize = r.groups.values().map(|g| g.subjects).sum();
        if n != r.subjects.len() || r.overall.subjects != n {
            return Err(schema(format!("{}: group sizes do not add up to the subject rows", r.method)));
        }
        for (g, m) in &r.groups {
            if r.subjects.iter().filter(|s| s.group == *g).count() != m.subjects {
                return Err(schema(format!("{}: group {g} size disagrees with subject rows", r.method)));
            }
        }
        if r.bias.is_some() != (r.groups.len() >= 2) {
            return Err(schema(format!("{}: bias must be present exactly when two or more groups are", r.method)));
        }
    }
    Ok(report)
}
