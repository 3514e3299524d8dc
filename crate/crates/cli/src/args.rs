use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "conflasso", version, about = "Exact conformal prediction sets for the Lasso and elastic net")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "CONFLASSO_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the Lasso/elastic net and print the coefficients.
    Fit(FitArgs),
    /// Conformal prediction sets for each row of a query file.
    Predict(PredictArgs),
    /// Coverage experiment on synthetic data.
    Simulate(SimulateArgs),
    /// Per-query timing of each method on synthetic data.
    Bench(SimulateArgs),
    /// Write the homotopy path of each query as JSON lines.
    DumpPath(DumpPathArgs),
}

/// `cv` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaArg {
    Value(f64),
    Cv,
}

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("cv") {
            return Ok(LambdaArg::Cv);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected a number or 'cv', got {s:?}"))?;
        if v > 0.0 && v.is_finite() {
            Ok(LambdaArg::Value(v))
        } else {
            Err(format!("lambda must be positive, got {v}"))
        }
    }
}

/// `auto` or `lo,hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeArg {
    Auto,
    Fixed(f64, f64),
}

impl FromStr for RangeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(RangeArg::Auto);
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [lo, hi] = parts.as_slice() else {
            return Err(format!("expected 'auto' or 'lo,hi', got {s:?}"));
        };
        let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound {lo:?}"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound {hi:?}"))?;
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(RangeArg::Fixed(lo, hi))
        } else {
            Err(format!("range needs finite lo < hi, got {lo},{hi}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Exact,
    ExactFast,
    Grid,
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Training CSV; the last column is the response.
    #[arg(long)]
    pub data: PathBuf,
    /// The CSV files start with a header line.
    #[arg(long)]
    pub header: bool,
    /// Centre and scale the covariates and centre the response before fitting.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    /// L1 weight on the unnormalized loss, or `cv` for 10-fold CV.
    #[arg(long)]
    pub lambda: LambdaArg,
    /// Ridge weight.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    /// Query CSV with covariates only.
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    pub method: MethodArg,
    /// Grid spacing; defaults to 100 points over the range.
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub split_frac: f64,
    #[arg(long, default_value = "auto")]
    pub range: RangeArg,
    /// Return only the interval containing the base prediction.
    #[arg(long)]
    pub early_stop_anchor: bool,
    /// Directory receiving one path file per query (exact methods).
    #[arg(long)]
    pub dump_path: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct DumpPathArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value = "auto")]
    pub range: RangeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    /// Linear model, Gaussian design and noise.
    #[value(alias = "1", alias = "i")]
    Linear,
    /// Additive cubic B-spline signal.
    #[value(alias = "2", alias = "ii")]
    Additive,
    /// Moving-average design with t₂ noise.
    #[value(alias = "3", alias = "iii")]
    HeavyTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMethod {
    Exact,
    Grid,
    Split,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Linear)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = RegimeArg::Low)]
    pub regime: RegimeArg,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Fixed λ, or `cv` for the median of CV choices over independent samples.
    #[arg(long, default_value = "cv")]
    pub lambda: LambdaArg,
    #[arg(long, default_value_t = 10)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 10)]
    pub cv_samples: usize,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 100)]
    pub n_test: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "exact,grid,split")]
    pub methods: Vec<SimMethod>,
    #[arg(long, default_value_t = 100)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 0.5)]
    pub split_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub early_stop_anchor: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write per-replication results as CSV (simulate only).
    #[arg(long)]
    pub raw_out: Option<PathBuf>,
}
