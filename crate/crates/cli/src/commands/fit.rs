use std::io::Write;

use conflasso::lasso;
use serde_json::json;

use super::{output, Prepared};
use crate::args::{FitArgs, Format};
use crate::error::CliResult;

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let prep = Prepared::load(&args.data, &args.penalty)?;
    let fit = lasso::fit(&prep.data, prep.penalty)?;
    let kkt = lasso::check_kkt(&prep.data, &fit, 1e-6);
    let original = prep.scaler.as_ref().map(|s| s.original_coefficients(fit.beta()));
    let mut out = output(args.out.as_deref())?;
    match args.format {
        Format::Json => {
            let mut record = json!({
                "n": prep.data.n(),
                "p": prep.data.p(),
                "lambda": prep.penalty.lambda(),
                "rho": prep.penalty.rho(),
                "active": fit.active(),
                "beta": fit.beta().as_slice(),
                "objective": fit.objective(),
                "kkt_max_violation": kkt.max_violation(),
                "standardized": prep.scaler.is_some(),
            });
            if let Some((b, intercept)) = &original {
                record["beta_original"] = json!(b.as_slice());
                record["intercept"] = json!(intercept);
            }
            serde_json::to_writer_pretty(&mut out, &record).map_err(std::io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            match &original {
                Some((b, intercept)) => {
                    w.write_record(["coordinate", "beta", "beta_original"])?;
                    w.write_record(["intercept", "", &intercept.to_string()])?;
                    for (j, (s, o)) in fit.beta().iter().zip(b.iter()).enumerate() {
                        w.write_record([(j + 1).to_string(), s.to_string(), o.to_string()])?;
                    }
                }
                None => {
                    w.write_record(["coordinate", "beta"])?;
                    for (j, s) in fit.beta().iter().enumerate() {
                        w.write_record([(j + 1).to_string(), s.to_string()])?;
                    }
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}
