//! Input records and result types shared across the crate.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One study's effect estimate and its standard error, on the analysis scale
/// (e.g. log odds ratio). No transformation is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub id: String,
    pub effect: f64,
    pub std_err: f64,
}

impl StudyRecord {
    pub fn new(id: impl Into<String>, effect: f64, std_err: f64) -> Self {
        StudyRecord {
            id: id.into(),
            effect,
            std_err,
        }
    }

    pub fn variance(&self) -> f64 {
        self.std_err * self.std_err
    }

    /// Fixed-effect weight `1 / std_err^2`.
    pub fn weight(&self) -> f64 {
        1.0 / self.variance()
    }
}

/// A validated, non-empty collection of studies in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    studies: Vec<StudyRecord>,
}

impl Dataset {
    /// Validates `studies` and wraps them. Order is preserved.
    pub fn new(studies: Vec<StudyRecord>) -> Result<Self> {
        if studies.is_empty() {
            return Err(Error::TooFewStudies { needed: 1, got: 0 });
        }
        let mut seen = HashSet::with_capacity(studies.len());
        for s in &studies {
            if !(s.std_err > 0.0 && s.std_err.is_finite()) {
                return Err(Error::NonPositiveStdErr(s.id.clone()));
            }
            if !s.effect.is_finite() {
                return Err(Error::NonFiniteEffect(s.id.clone()));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Dataset { studies })
    }

    pub fn studies(&self) -> &[StudyRecord] {
        &self.studies
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn effects(&self) -> impl Iterator<Item = f64> + '_ {
        self.studies.iter().map(|s| s.effect)
    }

    pub fn variances(&self) -> impl Iterator<Item = f64> + '_ {
        self.studies.iter().map(StudyRecord::variance)
    }

    /// Errors unless the dataset has at least `needed` studies.
    pub fn require(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            Err(Error::TooFewStudies {
                needed,
                got: self.len(),
            })
        } else {
            Ok(())
        }
    }

    pub fn into_studies(self) -> Vec<StudyRecord> {
        self.studies
    }
}

/// Builds a [`Dataset`] from raw `(id, effect, std_err)` triples.
pub fn validate_dataset<I, S>(raw: I) -> Result<Dataset>
where
    I: IntoIterator<Item = (S, f64, f64)>,
    S: Into<String>,
{
    Dataset::new(
        raw.into_iter()
            .map(|(id, effect, se)| StudyRecord::new(id, effect, se))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TauMethod {
    #[serde(rename = "DL")]
    Dl,
    #[serde(rename = "BM")]
    Bm,
}

/// Between-study variance together with the estimator that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityEstimate {
    pub tau2: f64,
    pub method: TauMethod,
}

/// Confidence-interval constructions. Declaration order is the reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DL")]
    Dl,
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "HC_BM")]
    HcBm,
    #[serde(rename = "BM")]
    Bm,
    #[serde(rename = "IVH")]
    Ivh,
    #[serde(rename = "FIXED")]
    Fixed,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Dl,
        Method::Hc,
        Method::HcBm,
        Method::Bm,
        Method::Ivh,
        Method::Fixed,
    ];

    /// The five intervals compared in the coverage study.
    pub const COMPARED: [Method; 5] = [
        Method::Dl,
        Method::Hc,
        Method::HcBm,
        Method::Bm,
        Method::Ivh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dl => "DL",
            Method::Hc => "HC",
            Method::HcBm => "HC_BM",
            Method::Bm => "BM",
            Method::Ivh => "IVH",
            Method::Fixed => "FIXED",
        }
    }

    /// Minimum number of studies the method needs.
    pub fn min_studies(self) -> usize {
        match self {
            Method::Fixed => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        match norm.as_str() {
            "DL" => Ok(Method::Dl),
            "HC" => Ok(Method::Hc),
            "HC_BM" | "HCBM" => Ok(Method::HcBm),
            "BM" => Ok(Method::Bm),
            "IVH" => Ok(Method::Ivh),
            "FIXED" | "FE" => Ok(Method::Fixed),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        }
    }
}

/// A two-sided confidence interval for the overall effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub method: Method,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub tau2_used: f64,
}

impl IntervalResult {
    /// Symmetric interval `estimate ± half_width`.
    pub fn symmetric(method: Method, estimate: f64, half_width: f64, level: f64, tau2_used: f64) -> Self {
        debug_assert!(half_width >= 0.0);
        IntervalResult {
            method,
            estimate,
            lower: estimate - half_width,
            upper: estimate + half_width,
            level,
            tau2_used,
        }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Checks `level` lies strictly inside (0, 1).
pub fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )))
    }
}
