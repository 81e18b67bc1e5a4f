//! Monte Carlo coverage study under outcome-dependent study selection.
//!
//! Studies follow the Brockwell-Gordon design: within-study variances are
//! `0.25 * chi2_1` draws restricted to `[0.009, 0.6]` by redrawing, true
//! effects are `N(theta, tau2)` and estimates `N(theta_i, sigma_i^2)`. A study
//! is kept with probability `exp(-beta * Phi(-y / sigma)^gamma)`, and studies
//! are generated one at a time until `n` have been kept.
//!
//! Random streams: replication `i` of a scenario with seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`. Grid scenarios get
//! their seed from the master seed through [`derive_seed`]. Results therefore
//! do not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{check_level, Dataset, Method, StudyRecord};
use crate::error::{Error, Result};
use crate::intervals::{Analysis, AnalysisConfig, MethodSelection};
use crate::special::normal_cdf;

pub const REFERENCE_THETA: f64 = 0.5;
pub const REFERENCE_TAU2: [f64; 3] = [0.05, 0.15, 0.25];
pub const REFERENCE_N: [usize; 5] = [3, 6, 9, 12, 15];
pub const REFERENCE_REPS: usize = 2000;

/// Attempts allowed per accepted study before giving up.
pub const MAX_ATTEMPTS_PER_STUDY: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bias {
    None,
    Moderate,
    Severe,
}

impl Bias {
    pub const ALL: [Bias; 3] = [Bias::None, Bias::Moderate, Bias::Severe];

    /// Selection parameters `(beta, gamma)`, or `None` when every study is kept.
    pub fn params(self) -> Option<(f64, f64)> {
        match self {
            Bias::None => None,
            Bias::Moderate => Some((4.0, 3.0)),
            Bias::Severe => Some((4.0, 1.5)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Bias::None => "none",
            Bias::Moderate => "moderate",
            Bias::Severe => "severe",
        }
    }
}

impl std::str::FromStr for Bias {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Bias::None),
            "moderate" => Ok(Bias::Moderate),
            "severe" => Ok(Bias::Severe),
            _ => Err(Error::InvalidArgument(format!("unknown bias `{s}`"))),
        }
    }
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub theta: f64,
    pub tau2: f64,
    pub n_studies: usize,
    pub bias: Bias,
    pub level: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n_studies < 2 {
            return Err(Error::InvalidArgument("n_studies must be at least 2".into()));
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) || !self.theta.is_finite() {
            return Err(Error::InvalidArgument("theta and tau2 must be finite, tau2 >= 0".into()));
        }
        check_level(self.level)
    }
}

/// SplitMix64 finalizer applied to `master + (index + 1) * golden_gamma`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for replication `rep` of a scenario seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// A Cartesian grid of scenarios, expanded in bias x tau2 x n order with
/// per-cell seeds derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta: f64,
    pub tau2: Vec<f64>,
    pub n_studies: Vec<usize>,
    pub bias: Vec<Bias>,
    pub level: f64,
    pub reps: usize,
    pub seed: u64,
}

impl GridSpec {
    /// The 45-cell grid of the reference study.
    pub fn reference(seed: u64, reps: usize) -> Self {
        GridSpec {
            theta: REFERENCE_THETA,
            tau2: REFERENCE_TAU2.to_vec(),
            n_studies: REFERENCE_N.to_vec(),
            bias: Bias::ALL.to_vec(),
            level: 0.95,
            reps,
            seed,
        }
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::with_capacity(self.bias.len() * self.tau2.len() * self.n_studies.len());
        for &bias in &self.bias {
            for &tau2 in &self.tau2 {
                for &n in &self.n_studies {
                    let idx = out.len() as u64;
                    out.push(Scenario {
                        theta: self.theta,
                        tau2,
                        n_studies: n,
                        bias,
                        level: self.level,
                        reps: self.reps,
                        seed: derive_seed(self.seed, idx),
                    });
                }
            }
        }
        out
    }

    /// Validates every expanded scenario; an empty axis is an error.
    pub fn validate(&self) -> Result<()> {
        if self.tau2.is_empty() || self.n_studies.is_empty() || self.bias.is_empty() {
            return Err(Error::InvalidArgument("grid axes must be non-empty".into()));
        }
        self.scenarios().iter().try_for_each(Scenario::validate)
    }
}

/// The 45 scenarios (bias x tau2 x n), seeds derived from `master_seed`.
pub fn reference_grid(master_seed: u64, reps: usize) -> Vec<Scenario> {
    GridSpec::reference(master_seed, reps).scenarios()
}

/// Probability that a study with estimate `y` and standard error `sigma`
/// is published: `exp(-beta * Phi(-y / sigma)^gamma_exp)`.
pub fn selection_probability(y: f64, sigma: f64, beta: f64, gamma_exp: f64) -> f64 {
    (-beta * normal_cdf(-y / sigma).powf(gamma_exp)).exp()
}

/// Within-study variance model: `scale * chi2_1` restricted to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceModel {
    pub scale: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for VarianceModel {
    fn default() -> Self {
        VarianceModel {
            scale: 0.25,
            lo: 0.009,
            hi: 0.6,
        }
    }
}

impl VarianceModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let v = self.scale * z * z;
            if v >= self.lo && v <= self.hi {
                return v;
            }
        }
    }
}

pub fn generate_study<R: Rng + ?Sized>(rng: &mut R, theta: f64, tau2: f64) -> StudyRecord {
    generate_study_with(rng, theta, tau2, &VarianceModel::default())
}

pub fn generate_study_with<R: Rng + ?Sized>(
    rng: &mut R,
    theta: f64,
    tau2: f64,
    model: &VarianceModel,
) -> StudyRecord {
    let var = model.sample(rng);
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let theta_i = theta + tau2.sqrt() * z1;
    let sigma = var.sqrt();
    StudyRecord::new("", theta_i + sigma * z2, sigma)
}

/// Generates studies, keeping each with the selection probability of the
/// scenario's bias level, until `n_studies` are kept.
pub fn generate_selected_dataset<R: Rng + ?Sized>(rng: &mut R, scenario: &Scenario) -> Result<Dataset> {
    let mut studies = Vec::with_capacity(scenario.n_studies);
    while studies.len() < scenario.n_studies {
        let mut attempts = 0;
        let study = loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS_PER_STUDY {
                return Err(Error::GeneratorStall(MAX_ATTEMPTS_PER_STUDY));
            }
            let s = generate_study(rng, scenario.theta, scenario.tau2);
            let keep = match scenario.bias.params() {
                None => true,
                Some((beta, gamma)) => {
                    let u: f64 = rng.random();
                    u < selection_probability(s.effect, s.std_err, beta, gamma)
                }
            };
            if keep {
                break s;
            }
        };
        let id = format!("s{}", studies.len() + 1);
        studies.push(StudyRecord { id, ..study });
    }
    Dataset::new(studies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Share of successful replications whose interval contains theta.
    pub coverage: f64,
    pub median_length: f64,
    pub mean_length: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub scenario: Scenario,
    pub methods: Vec<MethodSummary>,
}

impl SimulationSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }
}

/// Median with the even-count midpoint convention; NaN when empty.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Per-method `(covered, length)`, or `None` when the method failed.
type Replicate = Vec<Option<(bool, f64)>>;

fn replicate(scenario: &Scenario, methods: &[Method], cfg: &AnalysisConfig, rep: u64) -> Result<Replicate> {
    let mut rng = replication_rng(scenario.seed, rep);
    let ds = generate_selected_dataset(&mut rng, scenario)?;
    let mut analysis = Analysis::new(&ds, *cfg)?;
    Ok(methods
        .iter()
        .map(|&m| {
            analysis
                .interval(m, scenario.level)
                .ok()
                .filter(|r| r.length().is_finite())
                .map(|r| (r.contains(scenario.theta), r.length()))
        })
        .collect())
}

/// Runs all replications of one scenario. The interval level is taken from
/// the scenario; only the method set is read from `methods`.
pub fn run_scenario(scenario: &Scenario, methods: &MethodSelection, cfg: &AnalysisConfig) -> Result<SimulationSummary> {
    scenario.validate()?;
    let list: Vec<Method> = methods.methods().collect();
    let reps: Vec<Replicate> = (0..scenario.reps as u64)
        .into_par_iter()
        .map(|rep| replicate(scenario, &list, cfg, rep))
        .collect::<Result<_>>()?;

    let summaries = list
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let ok: Vec<(bool, f64)> = reps.iter().filter_map(|r| r[k]).collect();
            let successes = ok.len();
            let covered = ok.iter().filter(|(c, _)| *c).count();
            let mut lengths: Vec<f64> = ok.iter().map(|(_, l)| *l).collect();
            let mean_length = if successes > 0 {
                lengths.iter().sum::<f64>() / successes as f64
            } else {
                f64::NAN
            };
            MethodSummary {
                method,
                coverage: if successes > 0 {
                    covered as f64 / successes as f64
                } else {
                    f64::NAN
                },
                median_length: median(&mut lengths),
                mean_length,
                successes,
                failures: scenario.reps - successes,
            }
        })
        .collect();

    Ok(SimulationSummary {
        scenario: *scenario,
        methods: summaries,
    })
}

/// Runs every scenario independently; one result per scenario, in order.
pub fn run_grid(scenarios: &[Scenario], methods: &MethodSelection, cfg: &AnalysisConfig) -> Vec<Result<SimulationSummary>> {
    scenarios
        .par_iter()
        .map(|s| run_scenario(s, methods, cfg))
        .collect()
}
