//! Brute-force grid and split-conformal baselines.

use std::time::Instant;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::set::{assemble, BoundaryKind, Interval, PredictionSet};
use super::{check_alpha, check_range, conformity_rank};
use crate::data::{Dataset, PenaltyConfig};
use crate::error::{Error, Result};
use crate::lasso::{self, SolverOptions};
use crate::parallel::{self, Parallelism};

/// Consecutive grid points fitted with warm starts inside one task.
const GRID_CHUNK: usize = 32;

/// Conformal p-value `(n + 2 − rank)/(n + 1)` of the candidate residual
/// against `n` training residuals. The set `{p > α}` coincides with the rank
/// rule `rank ≤ ⌈(n+1)(1−α)⌉`.
pub fn p_value(train_residuals: &[f64], candidate_residual: f64) -> f64 {
    let n = train_residuals.len();
    let rank = conformity_rank(train_residuals.iter().copied(), candidate_residual);
    (n + 2 - rank) as f64 / (n + 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub y: f64,
    pub in_set: bool,
}

/// `y_min + k·step` for `k = 0, 1, …` while inside `[y_min, y_max]`; a step
/// wider than the range yields only `y_min`.
pub fn grid_points(range: (f64, f64), step: f64) -> Result<Vec<f64>> {
    check_range(range)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("grid step must be positive, got {step}")));
    }
    let count = ((range.1 - range.0) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| range.0 + k as f64 * step).collect())
}

/// Membership of every grid point, each decided by a full refit.
pub fn grid_set(
    data: &Dataset,
    x_new: &DVector<f64>,
    penalty: PenaltyConfig,
    alpha: f64,
    range: (f64, f64),
    step: f64,
) -> Result<Vec<GridPoint>> {
    grid_set_with(data, x_new, penalty, alpha, range, step, Parallelism::default())
}

pub fn grid_set_with(
    data: &Dataset,
    x_new: &DVector<f64>,
    penalty: PenaltyConfig,
    alpha: f64,
    range: (f64, f64),
    step: f64,
    mode: Parallelism,
) -> Result<Vec<GridPoint>> {
    check_alpha(alpha)?;
    data.check_covariate(x_new)?;
    let ys = grid_points(range, step)?;
    let base = lasso::fit(data, penalty)?;
    let opts = SolverOptions::default();
    let n = data.n();

    let chunks: Vec<&[f64]> = ys.chunks(GRID_CHUNK).collect();
    let results = parallel::map_slice(&chunks, mode, |chunk| -> Result<Vec<GridPoint>> {
        let mut warm = base.beta().clone();
        let mut out = Vec::with_capacity(chunk.len());
        for &y in chunk.iter() {
            let aug = data.augmented(x_new, y)?;
            let fit = lasso::fit_with(&aug, penalty, Some(&warm), &opts)?;
            let resid = aug.y() - aug.x() * fit.beta();
            let p = p_value(&resid.as_slice()[..n], resid[n]);
            out.push(GridPoint { y, in_set: p > alpha });
            warm = fit.beta().clone();
        }
        Ok(out)
    });
    let mut points = Vec::with_capacity(ys.len());
    for chunk in results {
        points.extend(chunk?);
    }
    Ok(points)
}

/// Each run of accepted grid points `y_a..y_b` becomes
/// `[y_a − step/2, y_b + step/2)`, clipped to `range`.
pub fn grid_to_set(points: &[GridPoint], step: f64, alpha: f64, range: (f64, f64)) -> PredictionSet {
    let half = 0.5 * step;
    let mut pieces = Vec::new();
    let mut run: Option<(f64, f64)> = None;
    for g in points {
        run = match (run, g.in_set) {
            (None, true) => Some((g.y, g.y)),
            (Some((a, _)), true) => Some((a, g.y)),
            (Some((a, b)), false) => {
                pieces.push(Interval::new(a - half, b + half, BoundaryKind::Calibrated, BoundaryKind::Calibrated));
                None
            }
            (None, false) => None,
        };
    }
    if let Some((a, b)) = run {
        pieces.push(Interval::new(a - half, b + half, BoundaryKind::Calibrated, BoundaryKind::Calibrated));
    }
    PredictionSet::from_intervals(assemble(pieces, range), alpha, range)
}

/// Split conformal: fit on a random `split_fraction` of the rows, calibrate
/// on the rest. The penalty is rescaled by `m_train/n` so the per-sample
/// penalty level matches the full fit. When `α < 1/(m+1)` the interval is
/// unbounded and is returned clipped to `range` with `clipped_infinite` set.
pub fn split_set(
    data: &Dataset,
    x_new: &DVector<f64>,
    penalty: PenaltyConfig,
    alpha: f64,
    split_fraction: f64,
    seed: u64,
    range: (f64, f64),
) -> Result<PredictionSet> {
    let started = Instant::now();
    check_alpha(alpha)?;
    check_range(range)?;
    data.check_covariate(x_new)?;
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "split fraction must lie in (0, 1), got {split_fraction}"
        )));
    }
    let n = data.n();
    let m_train = (n as f64 * split_fraction).floor() as usize;
    let m_hold = n - m_train;
    if m_train == 0 || m_hold == 0 {
        return Err(Error::DegenerateSplit {
            train: m_train,
            holdout: m_hold,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = data.subset(&idx[..m_train])?;
    let hold = data.subset(&idx[m_train..])?;

    let fit = lasso::fit(&train, penalty.scaled(m_train as f64 / n as f64)?)?;
    let center = fit.predict(x_new);
    let mut scores: Vec<f64> = (hold.y() - hold.x() * fit.beta()).iter().map(|r| r.abs()).collect();
    scores.sort_by(f64::total_cmp);

    let k = ((m_hold + 1) as f64 * (1.0 - alpha) - 1e-9).ceil() as usize;
    let mut set = if k > m_hold {
        let mut set = PredictionSet::from_intervals(
            vec![Interval::new(range.0, range.1, BoundaryKind::RangeClip, BoundaryKind::RangeClip)],
            alpha,
            range,
        );
        set.clipped_infinite = true;
        set
    } else {
        let q = scores[k.max(1) - 1];
        let iv = Interval::new(center - q, center + q, BoundaryKind::Calibrated, BoundaryKind::Calibrated);
        PredictionSet::from_intervals(assemble(vec![iv], range), alpha, range)
    };
    set.runtime_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_examples() {
        // anchor with all residuals larger: rank 1
        assert_eq!(p_value(&[1.0, 2.0, 3.0], 0.0), 1.0);
        // far away: rank n+1
        assert_eq!(p_value(&[1.0, 2.0, 3.0], 10.0), 0.25);
        assert_eq!(p_value(&[1.0], 0.5), 1.0);
        assert_eq!(p_value(&[1.0], 5.0), 0.5);
        // ties count against the candidate
        assert_eq!(p_value(&[1.0, 1.0], -1.0), 1.0 / 3.0);
    }

    #[test]
    fn grid_points_cover_range() {
        let g = grid_points((0.0, 1.0), 0.25).unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(grid_points((0.0, 1.0), 5.0).unwrap(), vec![0.0]);
        assert!(grid_points((0.0, 1.0), 0.0).is_err());
        assert!(grid_points((1.0, 0.0), 0.1).is_err());
    }

    #[test]
    fn grid_runs_become_intervals() {
        let pts: Vec<GridPoint> = [false, true, true, false, true]
            .iter()
            .enumerate()
            .map(|(k, &in_set)| GridPoint { y: k as f64, in_set })
            .collect();
        let set = grid_to_set(&pts, 1.0, 0.1, (0.0, 4.0));
        assert_eq!(set.intervals.len(), 2);
        assert_eq!((set.intervals[0].lo, set.intervals[0].hi), (0.5, 2.5));
        assert_eq!((set.intervals[1].lo, set.intervals[1].hi), (3.5, 4.0));
        assert_eq!(set.intervals[1].hi_kind, BoundaryKind::RangeClip);
    }

    #[test]
    fn grid_modes_agree() {
        let data = Dataset::from_rows(
            &[vec![1.0, 0.2], vec![-0.5, 1.0], vec![0.3, -1.2], vec![2.0, 0.1], vec![-1.0, -0.4]],
            &[1.0, 0.5, -1.0, 2.5, -0.8],
        )
        .unwrap();
        let x_new = DVector::from_vec(vec![0.4, 0.4]);
        let pen = PenaltyConfig::new(0.3, 0.1).unwrap();
        let a = grid_set_with(&data, &x_new, pen, 0.2, (-3.0, 3.0), 0.01, Parallelism::Sequential).unwrap();
        let b = grid_set_with(&data, &x_new, pen, 0.2, (-3.0, 3.0), 0.01, Parallelism::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 601);
    }

    #[test]
    fn split_equal_residuals_give_half_width() {
        // a penalty this large zeroes β, so every holdout residual is |y| = c
        let c = 1.75;
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 10.0 - 2.0]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { c } else { -c }).collect();
        let data = Dataset::from_rows(&rows, &y).unwrap();
        let pen = PenaltyConfig::lasso(1e6).unwrap();
        let x_new = DVector::from_vec(vec![0.3]);
        let set = split_set(&data, &x_new, pen, 0.1, 0.5, 3, (-50.0, 50.0)).unwrap();
        assert_eq!(set.intervals.len(), 1);
        let iv = set.intervals[0];
        assert_eq!((iv.lo, iv.hi), (-c, c));
        assert!(!set.clipped_infinite);
    }

    #[test]
    fn split_tiny_alpha_is_clipped_and_deterministic() {
        let data = Dataset::from_rows(
            &(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>(),
            &(0..10).map(|i| (i * i) as f64 / 10.0).collect::<Vec<_>>(),
        )
        .unwrap();
        let x_new = DVector::from_vec(vec![4.5]);
        let pen = PenaltyConfig::lasso(0.1).unwrap();
        let set = split_set(&data, &x_new, pen, 0.1, 0.5, 1, (-20.0, 20.0)).unwrap();
        assert!(set.clipped_infinite);
        assert_eq!(set.measure(), 40.0);

        let a = split_set(&data, &x_new, pen, 0.4, 0.5, 9, (-20.0, 20.0)).unwrap();
        let b = split_set(&data, &x_new, pen, 0.4, 0.5, 9, (-20.0, 20.0)).unwrap();
        assert_eq!(a.intervals, b.intervals);
        assert!(matches!(
            split_set(&data, &x_new, pen, 0.4, 0.05, 9, (-20.0, 20.0)),
            Err(Error::DegenerateSplit { train: 0, holdout: 10 })
        ));
    }
}
