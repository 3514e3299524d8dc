use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::models::draw;
use super::{ModelFamily, ModelSpec};
use crate::conformal::{default_range, grid_set_with, grid_to_set, split_set, ConformalLasso, ExactOptions};
use crate::data::PenaltyConfig;
use crate::error::{Error, Result};
use crate::parallel::{self, Parallelism};
use crate::tuning::{cv_median, CvOptions};

/// Offset separating the seeds of CV samples from those of replications.
const CV_SEED_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Grid,
    Split,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Grid => "grid",
            Method::Split => "split",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// λ on the unnormalized scale of an n_train-row fit.
    Fixed(f64),
    /// Median of the k-fold CV choices over independent samples.
    CvMedian { folds: usize, samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    /// Defaults to the regime's n.
    pub n_train: Option<usize>,
    pub n_test: usize,
    pub grid_points: usize,
    pub split_fraction: f64,
    pub rho: f64,
    pub early_stop_anchor: bool,
    pub mode: Parallelism,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            n_train: None,
            n_test: 100,
            grid_points: 100,
            split_fraction: 0.5,
            rho: 0.0,
            early_stop_anchor: false,
            mode: Parallelism::default(),
        }
    }
}

/// One method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub method: Method,
    pub coverage: f64,
    pub length: f64,
    /// Mean wall time per test point, base fit included.
    pub runtime_s: f64,
    pub multi_interval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub reps: usize,
    pub coverage: f64,
    pub coverage_se: f64,
    pub length: f64,
    pub length_se: f64,
    pub runtime_s: f64,
    pub runtime_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub spec: ModelSpec,
    pub alpha: f64,
    pub lambda_rule: LambdaRule,
    pub lambda: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub reps_requested: usize,
    pub reps_completed: usize,
    pub failed_reps: Vec<(usize, String)>,
    /// Sample variance of the training noise, averaged over reps. Absent for
    /// the t₂ family, whose noise has no finite variance.
    pub noise_variance: Option<f64>,
    pub methods: Vec<MethodSummary>,
    pub raw: Vec<RepResult>,
}

#[derive(Serialize)]
struct CsvRow {
    family: ModelFamily,
    regime: super::DimRegime,
    alpha: f64,
    lambda: f64,
    method: Method,
    reps: usize,
    coverage: f64,
    coverage_se: f64,
    length: f64,
    length_se: f64,
    runtime_s: f64,
    runtime_se: f64,
}

impl CoverageReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// One row per method.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for m in &self.methods {
            w.serialize(CsvRow {
                family: self.spec.family,
                regime: self.spec.regime,
                alpha: self.alpha,
                lambda: self.lambda,
                method: m.method,
                reps: m.reps,
                coverage: m.coverage,
                coverage_se: m.coverage_se,
                length: m.length,
                length_se: m.length_se,
                runtime_s: m.runtime_s,
                runtime_se: m.runtime_se,
            })
            .map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// One row per (replication, method).
    pub fn write_raw_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.raw {
            w.serialize(r).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv output failed: {e}"))
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

pub fn run_experiment(
    spec: ModelSpec,
    alpha: f64,
    lambda_rule: LambdaRule,
    methods: &[Method],
    reps: usize,
) -> Result<CoverageReport> {
    run_experiment_with(spec, alpha, lambda_rule, methods, reps, &ExperimentOptions::default())
}

/// Replication `r` uses seed `spec.seed + r`; replications run in parallel
/// under `opts.mode` and results do not depend on the mode. A replication
/// whose solver fails is logged and left out of the aggregates.
pub fn run_experiment_with(
    spec: ModelSpec,
    alpha: f64,
    lambda_rule: LambdaRule,
    methods: &[Method],
    reps: usize,
    opts: &ExperimentOptions,
) -> Result<CoverageReport> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidInput("at least one method is required".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if opts.grid_points < 2 {
        return Err(Error::InvalidInput("grid needs at least two points".into()));
    }
    let n_train = opts.n_train.unwrap_or(spec.regime.n());
    let lambda = resolve_lambda(&spec, lambda_rule, n_train, opts)?;
    let penalty = PenaltyConfig::new(lambda, opts.rho)?;

    let outcomes = parallel::map_indexed(reps, opts.mode, |rep| {
        let seed = spec.seed.wrapping_add(rep as u64);
        run_rep(&spec.with_seed(seed), rep, n_train, alpha, penalty, methods, opts)
    });

    let mut raw = Vec::new();
    let mut failed_reps = Vec::new();
    let mut noise_vars = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((results, noise_var)) => {
                raw.extend(results);
                noise_vars.push(noise_var);
            }
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                failed_reps.push((rep, e.to_string()));
            }
        }
    }
    let reps_completed = reps - failed_reps.len();
    let methods = if reps_completed == 0 {
        Vec::new()
    } else {
        methods
            .iter()
            .map(|&m| {
                let of = |f: fn(&RepResult) -> f64| -> Vec<f64> {
                    raw.iter().filter(|r| r.method == m).map(f).collect()
                };
                let (coverage, coverage_se) = mean_se(&of(|r| r.coverage));
                let (length, length_se) = mean_se(&of(|r| r.length));
                let (runtime_s, runtime_se) = mean_se(&of(|r| r.runtime_s));
                MethodSummary {
                    method: m,
                    reps: reps_completed,
                    coverage,
                    coverage_se,
                    length,
                    length_se,
                    runtime_s,
                    runtime_se,
                }
            })
            .collect()
    };
    let noise_variance = match spec.family {
        ModelFamily::HeavyTailCorrelated => None,
        _ if noise_vars.is_empty() => None,
        _ => Some(noise_vars.iter().sum::<f64>() / noise_vars.len() as f64),
    };
    Ok(CoverageReport {
        spec,
        alpha,
        lambda_rule,
        lambda,
        n_train,
        n_test: opts.n_test,
        reps_requested: reps,
        reps_completed,
        failed_reps,
        noise_variance,
        methods,
        raw,
    })
}

fn resolve_lambda(spec: &ModelSpec, rule: LambdaRule, n_train: usize, opts: &ExperimentOptions) -> Result<f64> {
    match rule {
        LambdaRule::Fixed(l) => Ok(l),
        LambdaRule::CvMedian { folds, samples } => {
            if samples == 0 {
                return Err(Error::InvalidInput("CV median needs at least one sample".into()));
            }
            let data = parallel::map_indexed(samples, opts.mode, |r| {
                let seed = spec.seed.wrapping_add(CV_SEED_OFFSET).wrapping_add(r as u64);
                draw(&spec.with_seed(seed), n_train, 0).map(|d| d.train)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let cv = CvOptions {
                folds,
                rho_per_sample: opts.rho / n_train as f64,
                seed: spec.seed,
                mode: opts.mode,
                ..CvOptions::default()
            };
            cv_median(&data, &cv, n_train)
        }
    }
}

fn run_rep(
    spec: &ModelSpec,
    rep: usize,
    n_train: usize,
    alpha: f64,
    penalty: PenaltyConfig,
    methods: &[Method],
    opts: &ExperimentOptions,
) -> Result<(Vec<RepResult>, f64)> {
    let d = draw(spec, n_train, opts.n_test)?;
    let (train, test) = (&d.train, &d.test);
    let range = default_range(train.y().as_slice());
    let n_test = test.len().max(1) as f64;
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let started = Instant::now();
        let mut covered = 0usize;
        let mut length = 0.0;
        let mut multi = 0usize;
        let mut tally = |set: &crate::conformal::PredictionSet, y: f64| {
            covered += usize::from(set.contains(y));
            length += set.measure();
            multi += usize::from(set.intervals.len() > 1);
        };
        match method {
            Method::Exact => {
                let cl = ConformalLasso::new(train, penalty)?;
                let eo = ExactOptions {
                    fast: true,
                    early_stop_anchor: opts.early_stop_anchor,
                };
                for (x, y) in test {
                    tally(&cl.exact_set(x, alpha, range, eo)?, *y);
                }
            }
            Method::Grid => {
                let step = (range.1 - range.0) / (opts.grid_points - 1) as f64;
                for (x, y) in test {
                    let pts = grid_set_with(train, x, penalty, alpha, range, step, Parallelism::Sequential)?;
                    tally(&grid_to_set(&pts, step, alpha, range), *y);
                }
            }
            Method::Split => {
                for (k, (x, y)) in test.iter().enumerate() {
                    let seed = spec.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
                    tally(&split_set(train, x, penalty, alpha, opts.split_fraction, seed, range)?, *y);
                }
            }
        }
        out.push(RepResult {
            rep,
            seed: spec.seed,
            method,
            coverage: covered as f64 / n_test,
            length: length / n_test,
            runtime_s: started.elapsed().as_secs_f64() / n_test,
            multi_interval: multi,
        });
    }
    let k = d.train_noise.len() as f64;
    let mean = d.train_noise.iter().sum::<f64>() / k;
    let noise_var = d.train_noise.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    Ok((out, noise_var))
}
