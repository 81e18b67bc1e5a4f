//! Confidence intervals for the overall effect.
//!
//! | method | centre | spread | quantile |
//! |--------|--------|--------|----------|
//! | DL     | theta_R(tau2_DL) | 1/sqrt(sum w_i(tau2_DL)) | normal |
//! | BM     | theta_R(tau2_BM) | 1/sqrt(sum w_i(tau2_BM)) | normal |
//! | IVH    | theta_F | sqrt(V(tau2_DL)) | normal |
//! | HC     | theta_F | sqrt(V(tau2_DL)) | pivot, plug-in tau2_DL |
//! | HC_BM  | theta_F | sqrt(V(tau2_DL)) | pivot, plug-in tau2_BM |
//! | FIXED  | theta_F | 1/sqrt(s1) | normal |

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{check_level, Dataset, HeterogeneityEstimate, IntervalResult, Method};
use crate::error::{Error, Result};
use crate::estimators::{self, BmConfig, FixedEffect, WeightSummary};
use crate::pivot::{self, PivotContext, QuadratureConfig};
use crate::special::normal_quantile;

/// Variance of the fixed-effect estimator under heterogeneity `tau2`,
/// `(tau2 * s2 + s1) / s1^2`, with fixed-effect weights.
pub fn v_of_tau2(weights: &WeightSummary, tau2: f64) -> f64 {
    (tau2 * weights.s2 + weights.s1) / (weights.s1 * weights.s1)
}

/// Two-sided standard normal critical value for `level`.
pub fn z_crit(level: f64) -> f64 {
    normal_quantile(0.5 + 0.5 * level)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSelection {
    methods: BTreeSet<Method>,
    level: f64,
}

impl MethodSelection {
    pub fn new(methods: impl IntoIterator<Item = Method>, level: f64) -> Result<Self> {
        let methods: BTreeSet<Method> = methods.into_iter().collect();
        if methods.is_empty() {
            return Err(Error::EmptyMethodSelection);
        }
        check_level(level)?;
        Ok(MethodSelection { methods, level })
    }

    pub fn all(level: f64) -> Result<Self> {
        Self::new(Method::ALL, level)
    }

    /// The five intervals compared in the coverage study.
    pub fn compared(level: f64) -> Result<Self> {
        Self::new(Method::COMPARED, level)
    }

    pub fn methods(&self) -> impl Iterator<Item = Method> + '_ {
        self.methods.iter().copied()
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.methods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub bm: BmConfig,
    pub quadrature: QuadratureConfig,
}

/// Shared estimates for one dataset; each is computed at most once.
pub struct Analysis<'a> {
    ds: &'a Dataset,
    cfg: AnalysisConfig,
    fixed: FixedEffect,
    dl: Option<HeterogeneityEstimate>,
    bm: Option<Result<HeterogeneityEstimate>>,
}

impl<'a> Analysis<'a> {
    pub fn new(ds: &'a Dataset, cfg: AnalysisConfig) -> Result<Self> {
        Ok(Analysis {
            ds,
            cfg,
            fixed: estimators::fixed_effect(ds)?,
            dl: None,
            bm: None,
        })
    }

    pub fn fixed(&self) -> &FixedEffect {
        &self.fixed
    }

    pub fn dl(&mut self) -> Result<HeterogeneityEstimate> {
        if let Some(h) = self.dl {
            return Ok(h);
        }
        let h = estimators::dl_tau2(self.ds)?;
        self.dl = Some(h);
        Ok(h)
    }

    pub fn bm(&mut self) -> Result<HeterogeneityEstimate> {
        if self.bm.is_none() {
            self.bm = Some(estimators::bm_tau2(self.ds, &self.cfg.bm));
        }
        self.bm.clone().expect("just set")
    }

    pub fn interval(&mut self, method: Method, level: f64) -> Result<IntervalResult> {
        check_level(level)?;
        self.ds.require(method.min_studies())?;
        match method {
            Method::Fixed => Ok(IntervalResult::symmetric(
                Method::Fixed,
                self.fixed.estimate,
                z_crit(level) / self.fixed.weights.s1.sqrt(),
                level,
                0.0,
            )),
            Method::Dl => {
                let tau2 = self.dl()?.tau2;
                random_effects_interval(self.ds, Method::Dl, tau2, level)
            }
            Method::Bm => {
                let tau2 = self.bm()?.tau2;
                random_effects_interval(self.ds, Method::Bm, tau2, level)
            }
            Method::Ivh => {
                let tau2 = self.dl()?.tau2;
                let sd = v_of_tau2(&self.fixed.weights, tau2).sqrt();
                Ok(IntervalResult::symmetric(
                    Method::Ivh,
                    self.fixed.estimate,
                    z_crit(level) * sd,
                    level,
                    tau2,
                ))
            }
            Method::Hc => {
                let tau2 = self.dl()?.tau2;
                self.pivot_interval(Method::Hc, tau2, level)
            }
            Method::HcBm => {
                let tau2 = self.bm()?.tau2;
                self.pivot_interval(Method::HcBm, tau2, level)
            }
        }
    }

    /// Centre `theta_F`, spread `sqrt(V(tau2_DL))`, quantile of the pivot
    /// computed with `tau2_plug`.
    fn pivot_interval(&mut self, method: Method, tau2_plug: f64, level: f64) -> Result<IntervalResult> {
        let tau2_dl = self.dl()?.tau2;
        let ctx = PivotContext::from_dataset(self.ds, tau2_plug)?;
        let alpha = 1.0 - level;
        let u = pivot::pivot_quantile(&ctx, 0.5 * alpha, &self.cfg.quadrature)?;
        let sd = v_of_tau2(&self.fixed.weights, tau2_dl).sqrt();
        Ok(IntervalResult::symmetric(
            method,
            self.fixed.estimate,
            u.abs() * sd,
            level,
            tau2_plug,
        ))
    }
}

/// Normal interval around the random-effects estimate at a given `tau2`.
pub fn random_effects_interval(ds: &Dataset, method: Method, tau2: f64, level: f64) -> Result<IntervalResult> {
    check_level(level)?;
    let re = estimators::random_effects(ds, tau2)?;
    Ok(IntervalResult::symmetric(method, re.estimate, z_crit(level) * re.se, level, tau2))
}

pub fn dl_interval(ds: &Dataset, level: f64) -> Result<IntervalResult> {
    Analysis::new(ds, AnalysisConfig::default())?.interval(Method::Dl, level)
}

pub fn hc_interval(ds: &Dataset, level: f64, cfg: &QuadratureConfig) -> Result<IntervalResult> {
    let cfg = AnalysisConfig {
        quadrature: *cfg,
        ..AnalysisConfig::default()
    };
    Analysis::new(ds, cfg)?.interval(Method::Hc, level)
}

pub fn hcbm_interval(ds: &Dataset, level: f64, bm: &BmConfig, cfg: &QuadratureConfig) -> Result<IntervalResult> {
    let cfg = AnalysisConfig {
        bm: *bm,
        quadrature: *cfg,
    };
    Analysis::new(ds, cfg)?.interval(Method::HcBm, level)
}

pub fn bm_interval(ds: &Dataset, level: f64, bm: &BmConfig) -> Result<IntervalResult> {
    let cfg = AnalysisConfig {
        bm: *bm,
        ..AnalysisConfig::default()
    };
    Analysis::new(ds, cfg)?.interval(Method::Bm, level)
}

pub fn ivh_interval(ds: &Dataset, level: f64) -> Result<IntervalResult> {
    Analysis::new(ds, AnalysisConfig::default())?.interval(Method::Ivh, level)
}

pub fn fixed_interval(ds: &Dataset, level: f64) -> Result<IntervalResult> {
    Analysis::new(ds, AnalysisConfig::default())?.interval(Method::Fixed, level)
}

/// Outcome of one requested method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: Result<IntervalResult>,
}

/// Runs every selected method. A failing method does not stop the others.
pub fn analyze(ds: &Dataset, sel: &MethodSelection, cfg: &AnalysisConfig) -> Result<Vec<MethodOutcome>> {
    if sel.is_empty() {
        return Err(Error::EmptyMethodSelection);
    }
    let mut analysis = Analysis::new(ds, *cfg)?;
    Ok(sel
        .methods()
        .map(|method| MethodOutcome {
            method,
            result: analysis.interval(method, sel.level()),
        })
        .collect())
}
