use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use conflasso::conformal::{grid_set_with, grid_to_set, split_set, ConformalLasso, ExactOptions, GridPoint, PredictionSet};
use conflasso::homotopy::trace;
use conflasso::parallel::map_indexed;
use conflasso::{Parallelism, QueryPoint};
use nalgebra::DVector;
use serde_json::json;

use super::{check_alpha, output, Prepared};
use crate::args::{Format, MethodArg, PredictArgs};
use crate::error::{CliError, CliResult};

struct Answer {
    set: PredictionSet,
    grid: Option<Vec<GridPoint>>,
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    check_alpha(args.alpha)?;
    let prep = Prepared::load(&args.data, &args.penalty)?;
    let queries = prep.queries(&args.query, args.data.header)?;
    let range = prep.range(args.range);
    let step = match (args.method, args.grid_step) {
        (MethodArg::Grid, Some(s)) if !(s > 0.0) => {
            return Err(CliError::input(format!("grid step must be positive, got {s}")))
        }
        (_, Some(s)) => s,
        (_, None) => (range.1 - range.0) / 99.0,
    };
    let exact = match args.method {
        MethodArg::Exact | MethodArg::ExactFast => Some(ConformalLasso::new(&prep.data, prep.penalty)?),
        _ => None,
    };
    if let Some(dir) = &args.dump_path {
        std::fs::create_dir_all(dir)?;
    }

    let answer = |k: usize| -> CliResult<Answer> {
        let started = Instant::now();
        let x = &queries[k];
        let result = match args.method {
            MethodArg::Exact | MethodArg::ExactFast => {
                let cl = exact.as_ref().expect("built for exact methods");
                let opts = ExactOptions {
                    fast: args.method == MethodArg::ExactFast,
                    early_stop_anchor: args.early_stop_anchor,
                };
                if let Some(dir) = &args.dump_path {
                    write_path(cl, x, range, &dir.join(format!("path_{k}.jsonl")))?;
                }
                Answer {
                    set: cl.exact_set(x, args.alpha, range, opts)?,
                    grid: None,
                }
            }
            MethodArg::Grid => {
                let pts = grid_set_with(&prep.data, x, prep.penalty, args.alpha, range, step, Parallelism::Sequential)?;
                let mut set = grid_to_set(&pts, step, args.alpha, range);
                set.runtime_ms = started.elapsed().as_secs_f64() * 1e3;
                Answer { set, grid: Some(pts) }
            }
            MethodArg::Split => Answer {
                set: split_set(&prep.data, x, prep.penalty, args.alpha, args.split_frac, args.penalty.seed, range)?,
                grid: None,
            },
        };
        log::info!("query {k}: {:.3} ms", started.elapsed().as_secs_f64() * 1e3);
        Ok(result)
    };
    let answers = map_indexed(queries.len(), Parallelism::Parallel, answer);

    let shift = prep.y_shift();
    let mut out = output(args.out.as_deref())?;
    let mut writer = (args.format == Format::Csv).then(|| csv::Writer::from_writer(Vec::new()));
    if let Some(w) = writer.as_mut() {
        if args.method == MethodArg::Grid {
            w.write_record(["query", "y", "in_set"])?;
        } else {
            w.write_record(["query", "lo", "hi"])?;
        }
    }
    for (k, answer) in answers.into_iter().enumerate() {
        let answer = answer?;
        match writer.as_mut() {
            None => {
                let rec = answer.set.to_record();
                let intervals: Vec<[f64; 2]> = rec.intervals.iter().map(|[lo, hi]| [lo + shift, hi + shift]).collect();
                let line = json!({
                    "query": k,
                    "alpha": rec.alpha,
                    "intervals": intervals,
                    "single_interval": rec.single_interval,
                    "n_segments": rec.n_segments,
                    "n_fallbacks": rec.n_fallbacks,
                    "runtime_ms": rec.runtime_ms,
                });
                writeln!(out, "{line}")?;
            }
            Some(w) => match &answer.grid {
                Some(pts) => {
                    for g in pts {
                        w.write_record([k.to_string(), (g.y + shift).to_string(), g.in_set.to_string()])?;
                    }
                }
                None => {
                    for iv in &answer.set.intervals {
                        w.write_record([k.to_string(), (iv.lo + shift).to_string(), (iv.hi + shift).to_string()])?;
                    }
                }
            },
        }
    }
    if let Some(w) = writer {
        let bytes = w.into_inner().map_err(|e| CliError::input(e.to_string()))?;
        out.write_all(&bytes)?;
    }
    out.flush()?;
    Ok(())
}

fn write_path(cl: &ConformalLasso<'_>, x: &DVector<f64>, range: (f64, f64), path: &std::path::Path) -> CliResult<()> {
    let q = QueryPoint::new(cl.base(), x.clone())?;
    let y0 = q.y_hat0();
    let path_obj = trace(cl.data(), cl.base(), &q, (range.0 - y0).min(0.0), (range.1 - y0).max(0.0))?;
    let file = BufWriter::new(File::create(path)?);
    path_obj.dump_jsonl(file)?;
    Ok(())
}
