use std::io::Write;

use conflasso::homotopy::trace;
use conflasso::{lasso, QueryPoint};

use super::{output, Prepared};
use crate::args::DumpPathArgs;
use crate::error::CliResult;

/// One JSON line per segment, tagged with the query row and its anchor
/// prediction. `t` is measured from the anchor.
pub fn dump_path(args: &DumpPathArgs) -> CliResult<()> {
    let prep = Prepared::load(&args.data, &args.penalty)?;
    let queries = prep.queries(&args.query, args.data.header)?;
    let range = prep.range(args.range);
    let base = lasso::fit(&prep.data, prep.penalty)?;
    let mut out = output(args.out.as_deref())?;
    for (k, x) in queries.into_iter().enumerate() {
        let q = QueryPoint::new(&base, x)?;
        let y0 = q.y_hat0();
        let path = trace(&prep.data, &base, &q, (range.0 - y0).min(0.0), (range.1 - y0).max(0.0))?;
        let mut buf = Vec::new();
        path.dump_jsonl(&mut buf)?;
        for line in buf.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
            let mut v: serde_json::Value = serde_json::from_slice(line).map_err(std::io::Error::from)?;
            v["query"] = k.into();
            v["y_hat0"] = (y0 + prep.y_shift()).into();
            writeln!(out, "{v}")?;
        }
    }
    out.flush()?;
    Ok(())
}
