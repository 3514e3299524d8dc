use std::io::Write;

use conflasso::simdata::{
    run_experiment_with, DimRegime, ExperimentOptions, LambdaRule, Method, ModelFamily, ModelSpec,
};
use conflasso::Parallelism;

use super::{check_alpha, output};
use crate::args::{Format, LambdaArg, ModelArg, RegimeArg, SimMethod, SimulateArgs};
use crate::error::{CliError, CliResult};

pub(crate) fn spec_of(args: &SimulateArgs) -> ModelSpec {
    let family = match args.model {
        ModelArg::Linear => ModelFamily::LinearGaussian,
        ModelArg::Additive => ModelFamily::NonlinearAdditive,
        ModelArg::HeavyTail => ModelFamily::HeavyTailCorrelated,
    };
    let regime = match args.regime {
        RegimeArg::Low => DimRegime::Low,
        RegimeArg::High => DimRegime::High,
    };
    ModelSpec::new(family, regime, args.seed)
}

pub(crate) fn rule_of(args: &SimulateArgs) -> LambdaRule {
    match args.lambda {
        LambdaArg::Value(v) => LambdaRule::Fixed(v),
        LambdaArg::Cv => LambdaRule::CvMedian {
            folds: args.cv_folds,
            samples: args.cv_samples,
        },
    }
}

pub(crate) fn methods_of(args: &SimulateArgs) -> Vec<Method> {
    let mut methods: Vec<Method> = args
        .methods
        .iter()
        .map(|m| match m {
            SimMethod::Exact => Method::Exact,
            SimMethod::Grid => Method::Grid,
            SimMethod::Split => Method::Split,
        })
        .collect();
    methods.dedup();
    methods
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    check_alpha(args.alpha)?;
    let opts = ExperimentOptions {
        n_train: None,
        n_test: args.n_test,
        grid_points: args.grid_points,
        split_fraction: args.split_frac,
        rho: args.rho,
        early_stop_anchor: args.early_stop_anchor,
        mode: Parallelism::Parallel,
    };
    let report = run_experiment_with(spec_of(args), args.alpha, rule_of(args), &methods_of(args), args.reps, &opts)?;
    for (rep, reason) in &report.failed_reps {
        log::warn!("replication {rep} skipped: {reason}");
    }
    if report.reps_completed == 0 {
        return Err(CliError::Numerical("every replication failed".into()));
    }
    let mut out = output(args.out.as_deref())?;
    match args.format {
        Format::Csv => report.write_csv(&mut out)?,
        Format::Json => writeln!(out, "{}", report.to_json())?,
    }
    out.flush()?;
    if let Some(path) = &args.raw_out {
        report.write_raw_csv(output(Some(path))?)?;
    }
    Ok(())
}
