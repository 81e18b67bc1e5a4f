//! Distribution of the pivot `U = (theta_F - theta) / sqrt(V(tau2_DL))`.
//!
//! Writing `R = sum w_i (Y_i - theta) / sqrt(s1)`, the pivot is
//! `U = R / f(max(Q, n - 1))`. Its distribution function integrates
//! `P(Q <= f^-1(r / u) | R = r)` against the normal density of `R`, with the
//! conditional law of `Q` approximated by a gamma distribution matched to
//! the exact conditional mean and variance. Everything depends on a plug-in
//! value of tau^2: the DL estimate for the HC interval, the BM estimate for
//! HC-BM.
//!
//! Conditional moments. With `e_i = Y_i - theta ~ N(0, V_i)`,
//! `V_i = sigma_i^2 + tau2`, `a_i = w_i / sqrt(s1)` and `s^2 = sum a_i^2 V_i`,
//! conditioning on `R = r` gives `e | r ~ N(mu, C)` where
//! `mu_i = V_i a_i r / s^2` and `C = diag(V) - (V a)(V a)^T / s^2`. Since
//! `Q = sum w_i e_i^2 - R^2` the mean and variance of `Q | r` are those of a
//! Gaussian quadratic form:
//! `M(r) = sum w_i (mu_i^2 + C_ii) - r^2` and
//! `V(r) = 2 tr(W C W C) + 4 mu^T W C W mu`. Both are quadratic in `r`; the
//! coefficients are computed once per context.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::domain::Dataset;
use crate::error::{Error, Result};
use crate::estimators::WeightSummary;
use crate::quadrature::{self, GkOptions};
use crate::solve;
use crate::special::{gamma_cdf, normal_pdf};

/// Tolerances for the pivot distribution function and its quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Width of the truncated tail of the `r` integral, in SDs of `R`.
    pub tail_sds: f64,
    /// Root tolerance on the probability scale.
    pub root_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-10,
            tail_sds: 10.0,
            root_tol: 1e-7,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("tail_sds", self.tail_sds),
            ("root_tol", self.root_tol),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn gk(&self) -> GkOptions {
        GkOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_intervals: 400,
        }
    }
}

/// Everything the pivot distribution depends on: the observed fixed-effect
/// weights, the within-study variances and the plug-in tau^2.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotContext {
    weights: WeightSummary,
    sigma2: Vec<f64>,
    tau2_plug: f64,
    r_var: f64,
    // M(r) = m0 + m2 r^2, V(r) = v0 + v2 r^2
    m0: f64,
    m2: f64,
    v0: f64,
    v2: f64,
}

impl PivotContext {
    pub fn new(sigma2: Vec<f64>, tau2_plug: f64) -> Result<Self> {
        if sigma2.len() < 2 {
            return Err(Error::TooFewStudies {
                needed: 2,
                got: sigma2.len(),
            });
        }
        if let Some(bad) = sigma2.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "within-study variances must be positive, got {bad}"
            )));
        }
        if !(tau2_plug >= 0.0 && tau2_plug.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau2_plug must be finite and >= 0, got {tau2_plug}"
            )));
        }
        let weights = WeightSummary::from_weights(sigma2.iter().map(|s| 1.0 / s).collect());
        if !(weights.s1 * weights.s1 > weights.s2) {
            return Err(Error::InvalidArgument("weights are degenerate (s1^2 <= s2)".into()));
        }

        let s1 = weights.s1;
        let mut s_sq = 0.0; // sum a_i^2 V_i
        let mut a_sum = 0.0; // sum w_i d_i^2
        let mut b_sum = 0.0; // sum w_i V_i
        let mut w2v2 = 0.0; // sum w_i^2 V_i^2
        let mut w2vd2 = 0.0; // sum w_i^2 V_i d_i^2
        for (&w, &s2) in weights.weights.iter().zip(&sigma2) {
            let v = s2 + tau2_plug;
            let a = w / s1.sqrt();
            let d = v * a;
            s_sq += a * a * v;
            a_sum += w * d * d;
            b_sum += w * v;
            w2v2 += w * w * v * v;
            w2vd2 += w * w * v * d * d;
        }
        let s4 = s_sq * s_sq;
        let m0 = b_sum - a_sum / s_sq;
        let m2 = a_sum / s4 - 1.0;
        let v0 = 2.0 * (w2v2 - 2.0 * w2vd2 / s_sq + a_sum * a_sum / s4);
        let v2 = 4.0 / s4 * (w2vd2 - a_sum * a_sum / s_sq);

        Ok(PivotContext {
            weights,
            sigma2,
            tau2_plug,
            r_var: s_sq,
            m0,
            m2,
            v0,
            v2,
        })
    }

    pub fn from_dataset(ds: &Dataset, tau2_plug: f64) -> Result<Self> {
        Self::new(ds.variances().collect(), tau2_plug)
    }

    /// Same observed weights, different plug-in.
    pub fn with_tau2(&self, tau2_plug: f64) -> Result<Self> {
        Self::new(self.sigma2.clone(), tau2_plug)
    }

    pub fn weights(&self) -> &WeightSummary {
        &self.weights
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn tau2_plug(&self) -> f64 {
        self.tau2_plug
    }

    pub fn n(&self) -> usize {
        self.sigma2.len()
    }

    fn df(&self) -> f64 {
        (self.n() - 1) as f64
    }

    fn f_slope(&self) -> f64 {
        let WeightSummary { s1, s2, .. } = self.weights;
        s2 / (s1 * s1 - s2)
    }
}

/// Variance of `R`: `1 + tau2 * s2 / s1`.
pub fn r_variance(ctx: &PivotContext) -> f64 {
    1.0 + ctx.tau2_plug * ctx.weights.s2 / ctx.weights.s1
}

/// `f(q) = sqrt(s2 (q - (n-1)) / (s1^2 - s2) + 1)`.
pub fn f_of_q(ctx: &PivotContext, q: f64) -> Result<f64> {
    let radicand = ctx.f_slope() * (q - ctx.df()) + 1.0;
    if radicand < 0.0 || radicand.is_nan() {
        return Err(Error::DomainError(radicand));
    }
    Ok(radicand.sqrt())
}

/// Inverse of [`f_of_q`] on `x >= 0`.
pub fn f_inverse(ctx: &PivotContext, x: f64) -> f64 {
    (x * x - 1.0) / ctx.f_slope() + ctx.df()
}

/// Exact conditional mean and variance of `Q` given `R = r`.
pub fn conditional_moments(ctx: &PivotContext, r: f64) -> (f64, f64) {
    let r2 = r * r;
    (ctx.m0 + ctx.m2 * r2, ctx.v0 + ctx.v2 * r2)
}

#[inline]
fn gamma_approx_cdf(m: f64, v: f64, q: f64) -> Result<f64> {
    if !(m > 0.0 && v > 0.0) {
        return Err(Error::DegenerateMoments(m));
    }
    Ok(gamma_cdf(q, m * m / v, v / m))
}

/// `P(Q <= q | R = r)` under the moment-matched gamma approximation.
pub fn q_given_r_cdf(ctx: &PivotContext, r: f64, q: f64) -> Result<f64> {
    let (m, v) = conditional_moments(ctx, r);
    gamma_approx_cdf(m, v, q)
}

/// `P(U <= u)`.
pub fn pivot_cdf(ctx: &PivotContext, u: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if u == 0.0 {
        return Ok(0.5);
    }
    if u.is_nan() {
        return Err(Error::InvalidArgument("u is NaN".into()));
    }
    if u.is_infinite() {
        return Ok(if u > 0.0 { 1.0 } else { 0.0 });
    }
    let sd = r_variance(ctx).sqrt();
    let failure = Cell::new(None);
    let integrand = |r: f64| {
        let x = r / u;
        debug_assert!(x >= 1.0 - 1e-9, "r/u = {x} below 1 on the integration region");
        let q = f_inverse(ctx, x.max(1.0));
        let (m, v) = conditional_moments(ctx, r);
        match gamma_approx_cdf(m, v, q) {
            Ok(p) => p * normal_pdf(r / sd) / sd,
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        }
    };
    let tail = cfg.tail_sds * sd;
    let value = if u > 0.0 {
        1.0 - quadrature::integrate(integrand, u, u + tail, &cfg.gk())?.value
    } else {
        quadrature::integrate(integrand, u - tail, u, &cfg.gk())?.value
    };
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(value.clamp(0.0, 1.0))
}

const INITIAL_BRACKET: f64 = 20.0;
const MAX_BRACKET: f64 = 1e4;

/// The `gamma` quantile of `U`, by bisection on [`pivot_cdf`].
pub fn pivot_quantile(ctx: &PivotContext, gamma: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1), got {gamma}")));
    }
    cfg.validate()?;
    if gamma == 0.5 {
        return Ok(0.0);
    }
    // P(U <= 0) = 1/2, so the root lies on the side of zero given by gamma
    let sign = if gamma > 0.5 { 1.0 } else { -1.0 };
    let mut edge = INITIAL_BRACKET;
    loop {
        let g = pivot_cdf(ctx, sign * edge, cfg)? - gamma;
        if g * sign >= 0.0 {
            break;
        }
        edge *= 2.0;
        if edge > MAX_BRACKET {
            return Err(Error::BracketFailure(gamma));
        }
    }
    let (lo, hi) = if sign > 0.0 { (0.0, edge) } else { (-edge, 0.0) };
    solve::bisect(
        |u| pivot_cdf(ctx, u, cfg).map(|p| p - gamma),
        lo,
        hi,
        cfg.root_tol,
        1e-12,
    )
}
