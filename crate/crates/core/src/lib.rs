//! Confidence intervals for the overall effect in random-effects
//! meta-analysis, including the Henmi-Copas interval with a Bayes modal
//! plug-in (HC-BM), its comparators (DL, HC, BM, IVH), and a Monte Carlo
//! harness for coverage and length under publication bias.

pub mod data;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod intervals;
pub mod io;
pub mod pivot;
pub mod quadrature;
pub mod simulation;
pub mod solve;
pub mod special;

pub use domain::{
    validate_dataset, Dataset, HeterogeneityEstimate, IntervalResult, Method, StudyRecord, TauMethod,
};
pub use error::{Error, Result};
pub use estimators::{bm_tau2, dl_tau2, fixed_effect, q_statistic, random_effects, BmConfig, WeightSummary};
pub use intervals::{analyze, AnalysisConfig, MethodOutcome, MethodSelection};
pub use pivot::{PivotContext, QuadratureConfig};
pub use simulation::{Bias, GridSpec, Scenario, SimulationSummary};

/// Crate version, echoed in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
