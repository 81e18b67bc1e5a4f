//! Point estimators for the overall effect and the between-study variance.

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, HeterogeneityEstimate, TauMethod};
use crate::error::{Error, Result};
use crate::solve;

/// Fixed-effect weights `w_i = 1 / sigma_i^2` with their first two power sums.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSummary {
    pub weights: Vec<f64>,
    pub s1: f64,
    pub s2: f64,
}

impl WeightSummary {
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self::from_weights(ds.studies().iter().map(|s| s.weight()).collect())
    }

    pub fn from_weights(weights: Vec<f64>) -> Self {
        let s1 = weights.iter().sum();
        let s2 = weights.iter().map(|w| w * w).sum();
        WeightSummary { weights, s1, s2 }
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// `s1 - s2 / s1`, the denominator of the moment estimator.
    pub fn dl_denominator(&self) -> f64 {
        self.s1 - self.s2 / self.s1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedEffect {
    pub estimate: f64,
    pub weights: WeightSummary,
}

pub fn fixed_effect(ds: &Dataset) -> Result<FixedEffect> {
    ds.require(1)?;
    let weights = WeightSummary::from_dataset(ds);
    let estimate = ds
        .effects()
        .zip(&weights.weights)
        .map(|(y, w)| w * y)
        .sum::<f64>()
        / weights.s1;
    Ok(FixedEffect { estimate, weights })
}

/// Cochran's Q around the fixed-effect estimate.
pub fn q_statistic(ds: &Dataset) -> Result<f64> {
    ds.require(2)?;
    let fe = fixed_effect(ds)?;
    Ok(q_about(ds, &fe))
}

fn q_about(ds: &Dataset, fe: &FixedEffect) -> f64 {
    ds.effects()
        .zip(&fe.weights.weights)
        .map(|(y, w)| w * (y - fe.estimate).powi(2))
        .sum()
}

/// DerSimonian-Laird moment estimator, truncated at zero.
pub fn dl_tau2(ds: &Dataset) -> Result<HeterogeneityEstimate> {
    ds.require(2)?;
    let fe = fixed_effect(ds)?;
    let q = q_about(ds, &fe);
    Ok(HeterogeneityEstimate {
        tau2: dl_tau2_from_q(q, &fe.weights),
        method: TauMethod::Dl,
    })
}

/// `max(0, (q - (n - 1)) / (s1 - s2/s1))`.
pub fn dl_tau2_from_q(q: f64, weights: &WeightSummary) -> f64 {
    let df = (weights.n() - 1) as f64;
    ((q - df) / weights.dl_denominator()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomEffect {
    pub estimate: f64,
    pub se: f64,
}

/// Inverse-variance estimate with weights `1 / (sigma_i^2 + tau2)`.
pub fn random_effects(ds: &Dataset, tau2: f64) -> Result<RandomEffect> {
    ds.require(1)?;
    if !(tau2 >= 0.0 && tau2.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau2 must be finite and >= 0, got {tau2}")));
    }
    let (sum_w, sum_wy) = ds
        .studies()
        .iter()
        .map(|s| (1.0 / (s.variance() + tau2), s.effect))
        .fold((0.0, 0.0), |(a, b), (w, y)| (a + w, b + w * y));
    Ok(RandomEffect {
        estimate: sum_wy / sum_w,
        se: 1.0 / sum_w.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    /// Profile likelihood with the overall effect maximized out.
    #[default]
    Profile,
    /// Restricted (REML) likelihood.
    Restricted,
}

/// Gamma prior on tau for the Bayes modal estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmConfig {
    pub shape: f64,
    pub rate: f64,
    pub tau_max_factor: f64,
    #[serde(default)]
    pub likelihood: Likelihood,
}

impl Default for BmConfig {
    fn default() -> Self {
        BmConfig {
            shape: 2.0,
            rate: 0.0,
            tau_max_factor: 10.0,
            likelihood: Likelihood::Profile,
        }
    }
}

impl BmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 1.0 && self.shape.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "BM prior shape must exceed 1, got {}",
                self.shape
            )));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "BM prior rate must be >= 0, got {}",
                self.rate
            )));
        }
        if !(self.tau_max_factor > 0.0 && self.tau_max_factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "BM tau_max_factor must be positive, got {}",
                self.tau_max_factor
            )));
        }
        Ok(())
    }
}

/// Log prior density of tau (up to a constant) plus the log likelihood,
/// with the overall effect profiled out.
pub fn penalized_log_likelihood(ds: &Dataset, tau: f64, cfg: &BmConfig) -> f64 {
    let tau2 = tau * tau;
    let mut sum_w = 0.0;
    let mut sum_wy = 0.0;
    let mut sum_log_v = 0.0;
    for s in ds.studies() {
        let v = s.variance() + tau2;
        sum_w += 1.0 / v;
        sum_wy += s.effect / v;
        sum_log_v += v.ln();
    }
    let theta = sum_wy / sum_w;
    let rss: f64 = ds
        .studies()
        .iter()
        .map(|s| (s.effect - theta).powi(2) / (s.variance() + tau2))
        .sum();
    let mut ll = -0.5 * (sum_log_v + rss);
    if cfg.likelihood == Likelihood::Restricted {
        ll -= 0.5 * sum_w.ln();
    }
    (cfg.shape - 1.0) * tau.ln() - cfg.rate * tau + ll
}

/// Search bracket `(tau_lo, tau_hi)` and the length scale it is built from.
pub fn bm_search_bracket(ds: &Dataset, cfg: &BmConfig) -> (f64, f64, f64) {
    let n = ds.len() as f64;
    let mean = ds.effects().sum::<f64>() / n;
    let sd = (ds.effects().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let max_se = ds.studies().iter().map(|s| s.std_err).fold(0.0, f64::max);
    let scale = max_se + sd;
    (1e-8 * scale, cfg.tau_max_factor * scale, scale)
}

const BM_SEED_POINTS: usize = 64;

/// Bayes modal estimate of tau^2: the maximizer of
/// [`penalized_log_likelihood`] over tau, squared.
pub fn bm_tau2(ds: &Dataset, cfg: &BmConfig) -> Result<HeterogeneityEstimate> {
    ds.require(2)?;
    cfg.validate()?;
    let (lo, hi, scale) = bm_search_bracket(ds, cfg);
    let objective = |tau: f64| penalized_log_likelihood(ds, tau, cfg);

    // multimodality guard: start from the best log-spaced grid point
    let ratio = (hi / lo).ln() / (BM_SEED_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..BM_SEED_POINTS)
        .map(|k| lo * (ratio * k as f64).exp())
        .collect();
    let best = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| (k, objective(t)))
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
        .ok_or(Error::OptimizerNoBracket)?;
    if best == 0 || best == BM_SEED_POINTS - 1 {
        return Err(Error::OptimizerNoBracket);
    }

    let max = solve::maximize(objective, grid[best - 1], grid[best + 1], 1e-8 * scale);
    let tau = if max.value >= objective(grid[best]) {
        max.x
    } else {
        grid[best]
    };
    if !(tau > 0.0) {
        return Err(Error::OptimizerNoBracket);
    }
    Ok(HeterogeneityEstimate {
        tau2: tau * tau,
        method: TauMethod::Bm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use crate::domain::validate_dataset;
    use approx::assert_abs_diff_eq;

    fn ds(rows: &[(f64, f64)]) -> Dataset {
        validate_dataset(
            rows.iter()
                .enumerate()
                .map(|(i, &(y, s))| (format!("s{i}"), y, s)),
        )
        .unwrap()
    }

    #[test]
    fn fixed_effect_single_study() {
        assert_eq!(fixed_effect(&ds(&[(3.0, 2.0)])).unwrap().estimate, 3.0);
    }

    #[test]
    fn fixed_effect_equal_weights() {
        assert_eq!(fixed_effect(&ds(&[(0.0, 1.0), (1.0, 1.0)])).unwrap().estimate, 0.5);
    }

    #[test]
    fn q_examples() {
        assert_eq!(q_statistic(&ds(&[(0.7, 1.0), (0.7, 0.3), (0.7, 2.0)])).unwrap(), 0.0);
        assert_eq!(q_statistic(&ds(&[(0.0, 1.0), (2.0, 1.0)])).unwrap(), 2.0);
        assert!(matches!(
            q_statistic(&ds(&[(0.0, 1.0)])),
            Err(Error::TooFewStudies { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn q_matches_hand_arithmetic_on_acute_rejection() {
        // spreadsheet-style recomputation with the rows written out
        let y = [-2.31, -0.46, -2.30, -1.76, -1.26, -2.42];
        let se = [0.60, 0.56, 0.88, 0.46, 0.64, 1.53];
        let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
        let sw: f64 = w.iter().sum();
        let mean = (0..6).map(|i| w[i] * y[i]).sum::<f64>() / sw;
        let sum_wy2: f64 = (0..6).map(|i| w[i] * y[i] * y[i]).sum();
        let q_alt = sum_wy2 - sw * mean * mean;
        let q = q_statistic(&data::crins_ar()).unwrap();
        assert_abs_diff_eq!(q, q_alt, epsilon = 1e-10);
        assert_abs_diff_eq!(q, 6.851_920_301_054_672, epsilon = 1e-9);
    }

    #[test]
    fn dl_truncates_at_zero() {
        let d = ds(&[(0.1, 1.0), (0.0, 1.0), (-0.1, 1.0)]);
        assert!(q_statistic(&d).unwrap() <= 2.0);
        assert_eq!(dl_tau2(&d).unwrap().tau2, 0.0);
    }

    #[test]
    fn dl_boundary_q_equals_df() {
        // Q = n - 1 = 2 exactly
        let d = ds(&[(-1.0, 1.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(q_statistic(&d).unwrap(), 2.0);
        assert_eq!(dl_tau2(&d).unwrap().tau2, 0.0);
    }

    #[test]
    fn case_study_heterogeneity() {
        let ar = dl_tau2(&data::crins_ar()).unwrap().tau2;
        let srr = dl_tau2(&data::crins_srr()).unwrap().tau2;
        assert_abs_diff_eq!(ar, 0.16, epsilon = 0.005);
        assert_abs_diff_eq!(srr, 0.14, epsilon = 0.005);
        let bm_ar = bm_tau2(&data::crins_ar(), &BmConfig::default()).unwrap().tau2;
        let bm_srr = bm_tau2(&data::crins_srr(), &BmConfig::default()).unwrap().tau2;
        assert_abs_diff_eq!(bm_ar, 0.38, epsilon = 0.005);
        assert_abs_diff_eq!(bm_srr, 0.87, epsilon = 0.005);
    }

    #[test]
    fn random_effects_reduces_to_fixed() {
        let d = data::crins_ar();
        let re = random_effects(&d, 0.0).unwrap();
        let fe = fixed_effect(&d).unwrap();
        assert_abs_diff_eq!(re.estimate, fe.estimate, epsilon = 1e-15);
        assert_abs_diff_eq!(re.se, 1.0 / fe.weights.s1.sqrt(), epsilon = 1e-15);
        assert!(random_effects(&d, -0.1).is_err());
    }

    #[test]
    fn bm_matches_dense_grid_oracle() {
        let d = data::crins_ar();
        let cfg = BmConfig::default();
        let (_, hi, _) = bm_search_bracket(&d, &cfg);
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut tau = 1e-6;
        while tau < hi {
            let v = penalized_log_likelihood(&d, tau, &cfg);
            if v > best.0 {
                best = (v, tau);
            }
            tau += 1e-4;
        }
        let got = bm_tau2(&d, &cfg).unwrap().tau2.sqrt();
        assert_abs_diff_eq!(got, best.1, epsilon = 1e-4);
    }

    #[test]
    fn bm_positive_for_identical_effects() {
        let d = ds(&[(1.0, 0.5), (1.0, 0.7), (1.0, 0.2)]);
        assert!(bm_tau2(&d, &BmConfig::default()).unwrap().tau2 > 0.0);
    }

    #[test]
    fn bm_config_validation() {
        let d = data::crins_ar();
        let bad = BmConfig {
            shape: 1.0,
            ..BmConfig::default()
        };
        assert!(matches!(bm_tau2(&d, &bad), Err(Error::InvalidArgument(_))));
        let bad = BmConfig {
            rate: -1.0,
            ..BmConfig::default()
        };
        assert!(bm_tau2(&d, &bad).is_err());
    }

    #[test]
    fn restricted_variant_is_larger_here() {
        let d = data::crins_ar();
        let prof = bm_tau2(&d, &BmConfig::default()).unwrap().tau2;
        let reml = bm_tau2(
            &d,
            &BmConfig {
                likelihood: Likelihood::Restricted,
                ..BmConfig::default()
            },
        )
        .unwrap()
        .tau2;
        assert!(reml > prof);
    }

    #[test]
    fn no_bracket_when_prior_pushes_mode_out() {
        // a huge rate drives the mode below the lower end of the bracket
        let d = data::crins_ar();
        let cfg = BmConfig {
            rate: 1e12,
            ..BmConfig::default()
        };
        assert_eq!(bm_tau2(&d, &cfg), Err(Error::OptimizerNoBracket));
    }
}
