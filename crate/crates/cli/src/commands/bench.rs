use std::io::Write;
use std::time::Instant;

use conflasso::conformal::{default_range, grid_set_with, split_set, ConformalLasso, ExactOptions};
use conflasso::simdata::{generate, LambdaRule, Method};
use conflasso::tuning::{cv_median, CvOptions};
use conflasso::{Parallelism, PenaltyConfig};
use serde_json::json;

use super::simulate::{methods_of, rule_of, spec_of};
use super::{check_alpha, output};
use crate::args::{Format, SimulateArgs};
use crate::error::{CliError, CliResult};

/// Seeds of the CV samples sit far from those of the benchmark datasets.
const CV_SEED_OFFSET: u64 = 1 << 40;

#[derive(Default)]
struct Timing {
    millis: Vec<f64>,
    segments: usize,
    fallbacks: usize,
}

impl Timing {
    fn quantile(&self, q: f64) -> f64 {
        let mut v = self.millis.clone();
        v.sort_by(f64::total_cmp);
        v[((v.len() - 1) as f64 * q).round() as usize]
    }
}

/// Sequential per-query timings; the exact method's time includes its base
/// fit so that it compares like for like with the grid.
pub fn bench(args: &SimulateArgs) -> CliResult<()> {
    check_alpha(args.alpha)?;
    if args.reps == 0 || args.n_test == 0 {
        return Err(CliError::input("bench needs at least one replication and one test point"));
    }
    if args.grid_points < 2 {
        return Err(CliError::input("grid needs at least two points"));
    }
    let spec = spec_of(args);
    let methods = methods_of(args);
    let n = spec.regime.n();
    let lambda = match rule_of(args) {
        LambdaRule::Fixed(v) => v,
        LambdaRule::CvMedian { folds, samples } => {
            let data = (0..samples)
                .map(|r| {
                    let seed = spec.seed.wrapping_add(CV_SEED_OFFSET).wrapping_add(r as u64);
                    generate(&spec.with_seed(seed), n, 0).map(|(d, _)| d)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let opts = CvOptions {
                folds,
                rho_per_sample: args.rho / n as f64,
                seed: spec.seed,
                ..CvOptions::default()
            };
            cv_median(&data, &opts, n)?
        }
    };
    let penalty = PenaltyConfig::new(lambda, args.rho)?;
    let exact_opts = ExactOptions {
        fast: true,
        early_stop_anchor: args.early_stop_anchor,
    };

    let mut timings: Vec<Timing> = methods.iter().map(|_| Timing::default()).collect();
    for rep in 0..args.reps {
        let (train, test) = generate(&spec.with_seed(spec.seed.wrapping_add(rep as u64)), n, args.n_test)?;
        let range = default_range(train.y().as_slice());
        let step = (range.1 - range.0) / (args.grid_points - 1) as f64;
        for (x, _) in &test {
            for (method, timing) in methods.iter().zip(timings.iter_mut()) {
                let started = Instant::now();
                match method {
                    Method::Exact => {
                        let cl = ConformalLasso::new(&train, penalty)?;
                        let set = cl.exact_set(x, args.alpha, range, exact_opts)?;
                        timing.segments += set.diagnostics.segments;
                        timing.fallbacks += set.diagnostics.fallback_refits;
                    }
                    Method::Grid => {
                        grid_set_with(&train, x, penalty, args.alpha, range, step, Parallelism::Sequential)?;
                    }
                    Method::Split => {
                        split_set(&train, x, penalty, args.alpha, args.split_frac, args.seed, range)?;
                    }
                }
                timing.millis.push(started.elapsed().as_secs_f64() * 1e3);
            }
        }
    }

    let rows: Vec<serde_json::Value> = methods
        .iter()
        .zip(&timings)
        .map(|(method, t)| {
            let queries = t.millis.len();
            let per_query = |c: usize| (*method == Method::Exact).then(|| c as f64 / queries as f64);
            json!({
                "method": method.to_string(),
                "queries": queries,
                "lambda": lambda,
                "mean_ms": t.millis.iter().sum::<f64>() / queries as f64,
                "median_ms": t.quantile(0.5),
                "p90_ms": t.quantile(0.9),
                "max_ms": t.quantile(1.0),
                "segments_per_query": per_query(t.segments),
                "fallbacks_per_query": per_query(t.fallbacks),
            })
        })
        .collect();

    let mut out = output(args.out.as_deref())?;
    match args.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows).map_err(std::io::Error::from)?)?,
        Format::Csv => {
            let columns = [
                "method",
                "queries",
                "lambda",
                "mean_ms",
                "median_ms",
                "p90_ms",
                "max_ms",
                "segments_per_query",
                "fallbacks_per_query",
            ];
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(columns)?;
            for row in &rows {
                w.write_record(columns.iter().map(|c| match &row[*c] {
                    serde_json::Value::Null => String::new(),
                    serde_json::Value::String(s) => s.clone(),
                    v => v.to_string(),
                }))?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}
