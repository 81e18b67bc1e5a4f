//! Monte Carlo oracles written against the model directly, without any of
//! the library's estimator or pivot code.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Draws of the exact pivot `U` at `theta = 0` with true heterogeneity `tau2`.
pub fn simulate_pivot(rng: &mut ChaCha8Rng, sigma2: &[f64], tau2: f64, draws: usize) -> Vec<f64> {
    let n = sigma2.len();
    let w: Vec<f64> = sigma2.iter().map(|s| 1.0 / s).collect();
    let sd: Vec<f64> = sigma2.iter().map(|s| (s + tau2).sqrt()).collect();
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    let mut y = vec![0.0; n];
    (0..draws)
        .map(|_| {
            for i in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                y[i] = sd[i] * z;
            }
            let theta_f = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / s1;
            let q: f64 = (0..n).map(|i| w[i] * (y[i] - theta_f).powi(2)).sum();
            let tau2_dl = ((q - (n as f64 - 1.0)) / (s1 - s2 / s1)).max(0.0);
            let v = (tau2_dl * s2 + s1) / (s1 * s1);
            theta_f / v.sqrt()
        })
        .collect()
}

/// Empirical `p` quantile (type 1) of sorted data.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Binned conditional moments of `Q` given `R` in `[r_lo, r_hi]`: returns
/// `(mean, se_mean, var, se_var, count)`.
pub fn binned_q_moments(
    rng: &mut ChaCha8Rng,
    sigma2: &[f64],
    tau2: f64,
    r_lo: f64,
    r_hi: f64,
    draws: usize,
) -> (f64, f64, f64, f64, usize) {
    let n = sigma2.len();
    let w: Vec<f64> = sigma2.iter().map(|s| 1.0 / s).collect();
    let sd: Vec<f64> = sigma2.iter().map(|s| (s + tau2).sqrt()).collect();
    let s1: f64 = w.iter().sum();
    let mut e = vec![0.0; n];
    let mut qs = Vec::new();
    for _ in 0..draws {
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            e[i] = sd[i] * z;
        }
        let r = (0..n).map(|i| w[i] * e[i]).sum::<f64>() / s1.sqrt();
        if r < r_lo || r > r_hi {
            continue;
        }
        let mean = (0..n).map(|i| w[i] * e[i]).sum::<f64>() / s1;
        qs.push((0..n).map(|i| w[i] * (e[i] - mean).powi(2)).sum::<f64>());
    }
    let k = qs.len() as f64;
    let mean = qs.iter().sum::<f64>() / k;
    let m2 = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / k;
    let m4 = qs.iter().map(|q| (q - mean).powi(4)).sum::<f64>() / k;
    let var = m2 * k / (k - 1.0);
    (mean, (var / k).sqrt(), var, ((m4 - m2 * m2) / k).sqrt(), qs.len())
}

pub fn round2(x: f64) -> f64 {
    // half away from zero
    (x * 100.0).round() / 100.0
}
