//! The JSON analysis report and its text renderings.

use std::fmt::Write as _;

use hcbm_core::estimators::{bm_tau2, dl_tau2, fixed_effect, q_statistic};
use hcbm_core::intervals::{analyze, AnalysisConfig, MethodSelection};
use hcbm_core::{BmConfig, Dataset, IntervalResult, Method, QuadratureConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exit::{self, CliError, Status};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub tool: Tool,
    pub dataset: Fingerprint,
    pub config: ConfigEcho,
    pub heterogeneity: Heterogeneity,
    pub results: Vec<MethodEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fingerprint {
    pub rows: usize,
    /// SHA-256 of the input file bytes, lowercase hex.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub level: f64,
    pub methods: Vec<Method>,
    pub bm: BmConfig,
    pub quadrature: QuadratureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heterogeneity {
    pub theta_fixed: f64,
    pub q: Option<f64>,
    pub tau2_dl: Option<f64>,
    pub tau2_bm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub method: Method,
    pub status: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub tau2_used: f64,
}

impl From<&IntervalResult> for Interval {
    fn from(r: &IntervalResult) -> Self {
        Interval {
            estimate: r.estimate,
            lower: r.lower,
            upper: r.upper,
            level: r.level,
            tau2_used: r.tau2_used,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Input,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorInfo {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub generated_at: String,
}

pub fn fingerprint(bytes: &[u8], ds: &Dataset) -> Fingerprint {
    Fingerprint {
        rows: ds.len(),
        sha256: hex::encode(Sha256::digest(bytes)),
    }
}

/// Runs the selected methods and assembles the report. Per-method failures
/// are recorded in the report rather than returned.
pub fn build(
    ds: &Dataset,
    fp: Fingerprint,
    sel: &MethodSelection,
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport, CliError> {
    let outcomes = analyze(ds, sel, cfg)?;
    let results = outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(r) => MethodEntry {
                method: o.method,
                status: Outcome::Ok,
                interval: Some(r.into()),
                error: None,
            },
            Err(e) => MethodEntry {
                method: o.method,
                status: Outcome::Error,
                interval: None,
                error: Some(ErrorInfo {
                    kind: if e.is_input_error() {
                        ErrorKind::Input
                    } else {
                        ErrorKind::Numerical
                    },
                    message: e.to_string(),
                }),
            },
        })
        .collect();
    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        tool: Tool {
            name: "hcbm".into(),
            version: hcbm_core::VERSION.into(),
        },
        dataset: fp,
        config: ConfigEcho {
            level: sel.level(),
            methods: sel.methods().collect(),
            bm: cfg.bm,
            quadrature: cfg.quadrature,
        },
        heterogeneity: Heterogeneity {
            theta_fixed: fixed_effect(ds)?.estimate,
            q: q_statistic(ds).ok(),
            tau2_dl: dl_tau2(ds).ok().map(|h| h.tau2),
            tau2_bm: bm_tau2(ds, &cfg.bm).ok().map(|h| h.tau2),
        },
        results,
        metadata: None,
    })
}

impl AnalysisReport {
    /// Exit status implied by the per-method outcomes.
    pub fn status(&self) -> Status {
        let count = |k| {
            self.results
                .iter()
                .filter(|r| r.error.as_ref().map(|e| e.kind) == Some(k))
                .count()
        };
        let ok = self.results.iter().filter(|r| r.status == Outcome::Ok).count();
        exit::combine(ok, count(ErrorKind::Input), count(ErrorKind::Numerical))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned text table, rounded to four decimals.
    pub fn to_table(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        let h = &self.heterogeneity;
        let _ = writeln!(out, "studies   {}", self.dataset.rows);
        let _ = writeln!(out, "sha256    {}", self.dataset.sha256);
        let _ = writeln!(out, "level     {}", self.config.level);
        let _ = writeln!(out, "theta_F   {:.4}", h.theta_fixed);
        let _ = writeln!(out, "Q         {}", opt(h.q));
        let _ = writeln!(out, "tau2_DL   {}", opt(h.tau2_dl));
        let _ = writeln!(out, "tau2_BM   {}", opt(h.tau2_bm));
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<6} {:>9} {:>9} {:>9} {:>9}",
            "method", "estimate", "lower", "upper", "tau2"
        );
        for r in &self.results {
            match (&r.interval, &r.error) {
                (Some(i), _) => {
                    let _ = writeln!(
                        out,
                        "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                        r.method.as_str(),
                        i.estimate,
                        i.lower,
                        i.upper,
                        i.tau2_used
                    );
                }
                (None, Some(e)) => {
                    let _ = writeln!(out, "{:<6} error: {}", r.method.as_str(), e.message);
                }
                (None, None) => {}
            }
        }
        out
    }

    /// One row per method, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,status,estimate,lower,upper,level,tau2_used,error\n");
        for r in &self.results {
            match (&r.interval, &r.error) {
                (Some(i), _) => {
                    let _ = writeln!(
                        out,
                        "{},ok,{},{},{},{},{},",
                        r.method.as_str(),
                        i.estimate,
                        i.lower,
                        i.upper,
                        i.level,
                        i.tau2_used
                    );
                }
                (None, e) => {
                    let msg = e.as_ref().map_or(String::new(), |e| e.message.replace('"', "\"\""));
                    let _ = writeln!(out, "{},error,,,,,,\"{msg}\"", r.method.as_str());
                }
            }
        }
        out
    }
}
