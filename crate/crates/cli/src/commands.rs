use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hcbm_core::intervals::{AnalysisConfig, MethodSelection};
use hcbm_core::io::read_dataset;
use hcbm_core::pivot::{pivot_cdf, pivot_quantile, PivotContext};
use hcbm_core::simulation::{run_grid, GridSpec, REFERENCE_REPS, REFERENCE_THETA};
use hcbm_core::{Bias, BmConfig, Method, QuadratureConfig, SimulationSummary};
use serde::Deserialize;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::exit::{self, CliError, Status};
use crate::report::{self, Metadata};
use crate::schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Table,
    Csv,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Input CSV with header `study_id,effect,std_err`.
    pub csv: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Comma-separated methods (DL, HC, HC_BM, BM, IVH, FIXED); default all.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Shape of the gamma prior on tau for the BM estimate.
    #[arg(long, default_value_t = 2.0)]
    pub bm_shape: f64,
    /// Rate of the gamma prior on tau for the BM estimate.
    #[arg(long, default_value_t = 0.0)]
    pub bm_rate: f64,
    /// Relative tolerance of the pivot quadrature.
    #[arg(long, default_value_t = 1e-6)]
    pub quad_rel_tol: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Omit the generation timestamp from JSON reports.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file describing the scenario grid.
    #[arg(long, conflicts_with_all = ["paper_grid", "theta", "tau2", "n_studies", "bias"])]
    pub config: Option<PathBuf>,
    /// Run the full 45-cell reference grid.
    #[arg(long, conflicts_with_all = ["theta", "tau2", "n_studies", "bias"])]
    pub paper_grid: bool,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Comma-separated between-study variances.
    #[arg(long, value_delimiter = ',', required_unless_present_any = ["config", "paper_grid"])]
    pub tau2: Vec<f64>,
    /// Comma-separated numbers of published studies.
    #[arg(long, value_delimiter = ',', required_unless_present_any = ["config", "paper_grid"])]
    pub n_studies: Vec<usize>,
    /// Comma-separated bias levels (none, moderate, severe); default none.
    #[arg(long, value_delimiter = ',')]
    pub bias: Vec<Bias>,
    /// Replications per scenario [default: 2000].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Interval level [default: 0.95].
    #[arg(long)]
    pub level: Option<f64>,
    /// Comma-separated methods; default DL, HC, HC_BM, BM, IVH.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Worker threads; default is the number of logical cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write CSV to this file instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantileFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct QuantileArgs {
    /// CSV dataset supplying the within-study variances.
    #[arg(required_unless_present = "weights", conflicts_with = "weights")]
    pub csv: Option<PathBuf>,
    /// Comma-separated inverse-variance weights instead of a CSV.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub tau2_plug: f64,
    /// Probability level of the quantile.
    #[arg(long, default_value_t = 0.975)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub quad_rel_tol: f64,
    #[arg(long, value_enum, default_value_t = QuantileFormat::Text)]
    pub format: QuantileFormat,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// JSON report produced by `analyze`.
    pub report: PathBuf,
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::input(format!("cannot write to stdout: {e}"))),
    }
}

fn selection(methods: &[Method], default: &[Method], level: f64) -> Result<MethodSelection, CliError> {
    let list = if methods.is_empty() { default } else { methods };
    Ok(MethodSelection::new(list.iter().copied(), level)?)
}

pub fn analyze(args: &AnalyzeArgs) -> Result<Status, CliError> {
    let bytes = read_file(&args.csv)?;
    let ds = read_dataset(bytes.as_slice()).map_err(|e| CliError::input(format!("{}: {e}", args.csv.display())))?;
    let sel = selection(&args.methods, &Method::ALL, args.level)?;
    let bm = BmConfig {
        shape: args.bm_shape,
        rate: args.bm_rate,
        ..BmConfig::default()
    };
    bm.validate()?;
    let quadrature = QuadratureConfig {
        rel_tol: args.quad_rel_tol,
        ..QuadratureConfig::default()
    };
    quadrature.validate()?;
    let cfg = AnalysisConfig { bm, quadrature };
    let mut rep = report::build(&ds, report::fingerprint(&bytes, &ds), &sel, &cfg)?;
    if !args.no_timestamp {
        rep.metadata = Some(Metadata {
            generated_at: OffsetDateTime::now_utc().format(&Rfc3339).expect("RFC 3339 formatting"),
        });
    }
    let text = match args.format {
        ReportFormat::Json => rep.to_json(),
        ReportFormat::Table => rep.to_table(),
        ReportFormat::Csv => rep.to_csv(),
    };
    emit(&text, args.output.as_deref())?;
    for r in &rep.results {
        if let Some(e) = &r.error {
            eprintln!("hcbm: {}: {}", r.method.as_str(), e.message);
        }
    }
    Ok(rep.status())
}

/// Scenario grid document accepted by `simulate --config`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub tau2: Vec<f64>,
    pub n_studies: Vec<usize>,
    #[serde(default = "default_bias")]
    pub bias: Vec<Bias>,
    pub level: Option<f64>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub methods: Vec<Method>,
}

fn default_theta() -> f64 {
    REFERENCE_THETA
}

fn default_bias() -> Vec<Bias> {
    vec![Bias::None]
}

pub const DEFAULT_SEED: u64 = 42;
pub const SIMULATION_HEADER: &str = "bias,tau2,n_studies,method,coverage,median_length,mean_length,failures,reps,seed";

/// Resolves flags and optional config file into a grid and method list.
pub fn simulation_plan(args: &SimulateArgs) -> Result<(GridSpec, MethodSelection), CliError> {
    let file: Option<GridFile> = match &args.config {
        Some(p) => {
            let text = String::from_utf8(read_file(p)?)
                .map_err(|_| CliError::input(format!("{}: not UTF-8", p.display())))?;
            Some(toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let reps = args.reps.or(file.as_ref().and_then(|f| f.reps)).unwrap_or(REFERENCE_REPS);
    let seed = args.seed.or(file.as_ref().and_then(|f| f.seed)).unwrap_or(DEFAULT_SEED);
    let level = args.level.or(file.as_ref().and_then(|f| f.level)).unwrap_or(0.95);
    let file_methods = file.as_ref().map(|f| f.methods.clone()).unwrap_or_default();
    let methods = if args.methods.is_empty() { &file_methods } else { &args.methods };
    let sel = selection(methods, &Method::COMPARED, level)?;

    let mut grid = if args.paper_grid {
        GridSpec::reference(seed, reps)
    } else if let Some(f) = file {
        GridSpec {
            theta: f.theta,
            tau2: f.tau2,
            n_studies: f.n_studies,
            bias: f.bias,
            level,
            reps,
            seed,
        }
    } else {
        GridSpec {
            theta: args.theta.unwrap_or(REFERENCE_THETA),
            tau2: args.tau2.clone(),
            n_studies: args.n_studies.clone(),
            bias: if args.bias.is_empty() { default_bias() } else { args.bias.clone() },
            level,
            reps,
            seed,
        }
    };
    grid.level = level;
    grid.validate()?;
    Ok((grid, sel))
}

pub fn simulation_rows(grid: &GridSpec, results: &[Result<SimulationSummary, hcbm_core::Error>]) -> String {
    let mut out = String::from(SIMULATION_HEADER);
    out.push('\n');
    for s in results.iter().flatten() {
        let sc = &s.scenario;
        for m in &s.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                sc.bias.as_str(),
                sc.tau2,
                sc.n_studies,
                m.method.as_str(),
                m.coverage,
                m.median_length,
                m.mean_length,
                m.failures,
                sc.reps,
                grid.seed
            );
        }
    }
    out
}

pub fn simulate(args: &SimulateArgs) -> Result<Status, CliError> {
    let (grid, sel) = simulation_plan(args)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(CliError::input("--jobs must be at least 1"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::input(format!("cannot start thread pool: {e}")))?;
    let scenarios = grid.scenarios();
    let results = pool.install(|| run_grid(&scenarios, &sel, &AnalysisConfig::default()));
    emit(&simulation_rows(&grid, &results), args.output.as_deref())?;

    let (mut ok, mut input, mut numerical) = (0, 0, 0);
    for (sc, r) in scenarios.iter().zip(&results) {
        match r {
            Ok(_) => ok += 1,
            Err(e) => {
                eprintln!(
                    "hcbm: scenario (bias {}, tau2 {}, n {}): {e}",
                    sc.bias.as_str(),
                    sc.tau2,
                    sc.n_studies
                );
                if e.is_input_error() {
                    input += 1;
                } else {
                    numerical += 1;
                }
            }
        }
    }
    Ok(exit::combine(ok, input, numerical))
}

pub fn quantile(args: &QuantileArgs) -> Result<Status, CliError> {
    let sigma2: Vec<f64> = match &args.csv {
        Some(p) => {
            let bytes = read_file(p)?;
            let ds = read_dataset(bytes.as_slice()).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            ds.variances().collect()
        }
        None => {
            if let Some(w) = args.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
                return Err(CliError::input(format!("weights must be positive and finite, got {w}")));
            }
            args.weights.iter().map(|w| 1.0 / w).collect()
        }
    };
    let cfg = QuadratureConfig {
        rel_tol: args.quad_rel_tol,
        ..QuadratureConfig::default()
    };
    cfg.validate()?;
    let ctx = PivotContext::new(sigma2, args.tau2_plug)?;
    let u = pivot_quantile(&ctx, args.gamma, &cfg)?;
    let achieved = (pivot_cdf(&ctx, u, &cfg)? - args.gamma).abs();
    let text = match args.format {
        QuantileFormat::Text => format!("u {u}\nabs_cdf_error {achieved:e}\n"),
        QuantileFormat::Json => {
            let v = serde_json::json!({
                "gamma": args.gamma,
                "tau2_plug": args.tau2_plug,
                "u": u,
                "abs_cdf_error": achieved,
            });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("serializes"))
        }
    };
    emit(&text, None)?;
    Ok(Status::Success)
}

pub fn validate(args: &ValidateArgs) -> Result<Status, CliError> {
    let bytes = read_file(&args.report)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::input("report is not UTF-8"))?;
    match schema::validate_str(&text) {
        Ok(_) => {
            println!("{}: valid", args.report.display());
            Ok(Status::Success)
        }
        Err(errors) => {
            for e in &errors {
                eprintln!("hcbm: {e}");
            }
            Err(CliError::input(format!("{}: {} schema violation(s)", args.report.display(), errors.len())))
        }
    }
}
