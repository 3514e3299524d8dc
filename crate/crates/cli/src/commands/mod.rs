mod bench;
mod dump_path;
mod fit;
mod predict;
mod simulate;

pub use bench::bench;
pub use dump_path::dump_path;
pub use fit::fit;
pub use predict::predict;
pub use simulate::simulate;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use conflasso::conformal::default_range;
use conflasso::tuning::{cross_validate, CvOptions};
use conflasso::{Dataset, PenaltyConfig};
use nalgebra::DVector;

use crate::args::{DataArgs, LambdaArg, PenaltyArgs, RangeArg};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_csv, read_matrix};
use crate::standardize::Standardizer;

/// Training data as the solver sees it, plus the transform that produced it.
pub(crate) struct Prepared {
    pub data: Dataset,
    pub scaler: Option<Standardizer>,
    pub penalty: PenaltyConfig,
}

impl Prepared {
    pub fn load(data: &DataArgs, penalty: &PenaltyArgs) -> CliResult<Self> {
        let raw = ingest_csv(&data.data, data.header)?;
        let (data, scaler) = if data.standardize {
            let s = Standardizer::fit(&raw)?;
            (s.transform(&raw)?, Some(s))
        } else {
            (raw, None)
        };
        let lambda = match penalty.lambda {
            LambdaArg::Value(v) => v,
            LambdaArg::Cv => {
                let n = data.n() as f64;
                let opts = CvOptions {
                    folds: 10.min(data.n()),
                    rho_per_sample: penalty.rho / n,
                    seed: penalty.seed,
                    ..CvOptions::default()
                };
                let cv = cross_validate(&data, &opts)?;
                log::info!("cross-validated lambda = {:.6}", cv.best_lambda);
                cv.best_lambda
            }
        };
        let penalty = PenaltyConfig::new(lambda, penalty.rho)?;
        Ok(Self { data, scaler, penalty })
    }

    /// Query rows mapped into the solver's coordinates.
    pub fn queries(&self, path: &Path, header: bool) -> CliResult<Vec<DVector<f64>>> {
        let m = read_matrix(path, header)?;
        if m.ncols() != self.data.p() {
            return Err(CliError::input(format!(
                "query file has {} columns but the training data has {} covariates",
                m.ncols(),
                self.data.p()
            )));
        }
        Ok((0..m.nrows())
            .map(|i| {
                let x = m.row(i).transpose();
                match &self.scaler {
                    Some(s) => s.transform_query(&x),
                    None => x,
                }
            })
            .collect())
    }

    /// Response offset between the solver's scale and the user's.
    pub fn y_shift(&self) -> f64 {
        self.scaler.as_ref().map_or(0.0, |s| s.y_mean)
    }

    /// Search range on the solver's scale.
    pub fn range(&self, arg: RangeArg) -> (f64, f64) {
        match arg {
            RangeArg::Auto => default_range(self.data.y().as_slice()),
            RangeArg::Fixed(lo, hi) => (lo - self.y_shift(), hi - self.y_shift()),
        }
    }
}

pub(crate) fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::input(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub(crate) fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::input(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}
