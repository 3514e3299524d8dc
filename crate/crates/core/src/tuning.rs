//! K-fold cross-validation of the Lasso penalty.
//!
//! Penalties are searched on a per-sample scale `λ̃ = λ/n`, so a fold with
//! `m` training rows is fitted with `λ̃·m` and the value returned for the
//! full data is `λ̃·n`.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, PenaltyConfig};
use crate::error::{Error, Result};
use crate::lasso::{self, SolverOptions};
use crate::parallel::{self, Parallelism};

/// Smallest λ at which the Lasso solution is identically zero: `‖Xᵀy‖∞`.
pub fn lambda_max(data: &Dataset) -> f64 {
    data.x().tr_mul(data.y()).amax()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub n_lambdas: usize,
    /// Smallest grid value as a fraction of the largest; `None` picks 1e-3,
    /// or 1e-2 when p > n.
    pub min_ratio: Option<f64>,
    /// Per-sample ridge weight, scaled like λ.
    pub rho_per_sample: f64,
    pub seed: u64,
    pub mode: Parallelism,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            n_lambdas: 50,
            min_ratio: None,
            rho_per_sample: 0.0,
            seed: 0,
            mode: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Per-sample penalties, decreasing.
    pub lambdas: Vec<f64>,
    /// Mean squared held-out error for each entry of `lambdas`.
    pub errors: Vec<f64>,
    pub best_index: usize,
    /// The selected penalty on the full-data (unnormalized) scale.
    pub best_lambda: f64,
}

/// Log-spaced per-sample grid from `‖Xᵀy‖∞/n` downward.
pub fn lambda_grid(data: &Dataset, n_lambdas: usize, min_ratio: Option<f64>) -> Result<Vec<f64>> {
    if n_lambdas == 0 {
        return Err(Error::InvalidInput("lambda grid must be nonempty".into()));
    }
    let top = lambda_max(data) / data.n() as f64;
    if !(top > 0.0) {
        return Err(Error::InvalidInput("X'y is zero; every penalty gives β = 0".into()));
    }
    let ratio = min_ratio.unwrap_or(if data.p() > data.n() { 1e-2 } else { 1e-3 });
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("min_ratio must lie in (0, 1), got {ratio}")));
    }
    if n_lambdas == 1 {
        return Ok(vec![top]);
    }
    let step = ratio.ln() / (n_lambdas - 1) as f64;
    Ok((0..n_lambdas).map(|k| top * (step * k as f64).exp()).collect())
}

pub fn cross_validate(data: &Dataset, opts: &CvOptions) -> Result<CvResult> {
    let n = data.n();
    if opts.folds < 2 || opts.folds > n {
        return Err(Error::InvalidInput(format!(
            "need 2 <= folds <= n, got {} folds for n = {n}",
            opts.folds
        )));
    }
    let lambdas = lambda_grid(data, opts.n_lambdas, opts.min_ratio)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));

    let fold_errors = parallel::map_indexed(opts.folds, opts.mode, |k| -> Result<Vec<f64>> {
        let (mut hold, mut train) = (Vec::new(), Vec::new());
        for (pos, &i) in order.iter().enumerate() {
            if pos % opts.folds == k {
                hold.push(i);
            } else {
                train.push(i);
            }
        }
        let train_set = data.subset(&train)?;
        let hold_set = data.subset(&hold)?;
        let m = train.len() as f64;
        let mut warm: Option<DVector<f64>> = None;
        let mut sse = Vec::with_capacity(lambdas.len());
        for &lt in &lambdas {
            let pen = PenaltyConfig::new(lt * m, opts.rho_per_sample * m)?;
            let fit = lasso::fit_with(&train_set, pen, warm.as_ref(), &SolverOptions::default())?;
            let resid = hold_set.y() - hold_set.x() * fit.beta();
            sse.push(resid.norm_squared());
            warm = Some(fit.beta().clone());
        }
        Ok(sse)
    });

    let mut errors = vec![0.0; lambdas.len()];
    for fold in fold_errors {
        for (e, s) in errors.iter_mut().zip(fold?) {
            *e += s;
        }
    }
    for e in &mut errors {
        *e /= n as f64;
    }
    // first minimum along a decreasing grid favours the larger penalty
    let best_index = errors
        .iter()
        .enumerate()
        .fold(0, |best, (k, &e)| if e < errors[best] { k } else { best });
    Ok(CvResult {
        best_lambda: lambdas[best_index] * n as f64,
        lambdas,
        errors,
        best_index,
    })
}

/// Median of the per-sample CV choices over independent samples, returned
/// on the scale of a dataset with `n_target` rows.
pub fn cv_median(samples: &[Dataset], opts: &CvOptions, n_target: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("cv_median needs at least one sample".into()));
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    for (r, data) in samples.iter().enumerate() {
        let run = CvOptions {
            seed: opts.seed.wrapping_add(r as u64),
            ..*opts
        };
        let cv = cross_validate(data, &run)?;
        per_sample.push(cv.lambdas[cv.best_index]);
    }
    per_sample.sort_by(f64::total_cmp);
    let k = per_sample.len();
    let median = if k % 2 == 1 {
        per_sample[k / 2]
    } else {
        0.5 * (per_sample[k / 2 - 1] + per_sample[k / 2])
    };
    Ok(median * n_target as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sparse_problem(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 3.0 * r[0] - 2.0 * r[1] + 0.3 * rng.random_range(-1.0..1.0))
            .collect();
        Dataset::from_rows(&rows, &y).unwrap()
    }

    #[test]
    fn lambda_max_zeroes_the_fit() {
        let data = sparse_problem(1, 40, 6);
        let lmax = lambda_max(&data);
        let at = lasso::fit(&data, PenaltyConfig::lasso(lmax).unwrap()).unwrap();
        assert!(at.active().is_empty());
        let below = lasso::fit(&data, PenaltyConfig::lasso(0.99 * lmax).unwrap()).unwrap();
        assert!(!below.active().is_empty());
    }

    #[test]
    fn grid_is_log_spaced() {
        let data = sparse_problem(2, 30, 5);
        let g = lambda_grid(&data, 4, Some(1e-3)).unwrap();
        assert!((g[0] - lambda_max(&data) / 30.0).abs() < 1e-12);
        assert!((g[3] / g[0] - 1e-3).abs() < 1e-12);
        assert!((g[1] / g[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cv_prefers_moderate_penalty_and_is_deterministic() {
        let data = sparse_problem(3, 80, 10);
        let opts = CvOptions {
            seed: 5,
            ..CvOptions::default()
        };
        let a = cross_validate(&data, &opts).unwrap();
        let b = cross_validate(&data, &CvOptions { mode: Parallelism::Sequential, ..opts }).unwrap();
        assert_eq!(a, b);
        assert!(a.best_index > 0, "λ_max zeroes a strong signal and cannot win");
        let fit = lasso::fit(&data, PenaltyConfig::lasso(a.best_lambda).unwrap()).unwrap();
        assert!(fit.active().contains(&0) && fit.active().contains(&1));
    }

    #[test]
    fn median_of_three() {
        let samples: Vec<Dataset> = (0..3).map(|s| sparse_problem(10 + s, 50, 5)).collect();
        let opts = CvOptions::default();
        let med = cv_median(&samples, &opts, 100).unwrap();
        let mut each: Vec<f64> = samples
            .iter()
            .enumerate()
            .map(|(r, d)| {
                let cv = cross_validate(d, &CvOptions { seed: r as u64, ..opts }).unwrap();
                cv.lambdas[cv.best_index]
            })
            .collect();
        each.sort_by(f64::total_cmp);
        assert!((med - 100.0 * each[1]).abs() < 1e-12);
        assert!(cross_validate(&samples[0], &CvOptions { folds: 1, ..opts }).is_err());
    }
}
