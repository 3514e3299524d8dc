//! Conformal prediction sets for the Lasso and elastic net.
//!
//! The conformity of the appended candidate `(x_new, y)` is its absolute
//! residual under the augmented fit. `y` belongs to the set when
//!
//! ```text
//! #{ i ≤ n+1 : |rᵢ(y)| ≤ |r_{n+1}(y)| } ≤ ⌈(n+1)(1 − α)⌉
//! ```
//!
//! which is the same as `p(y) > α` for the p-value returned by [`p_value`].
//! [`exact_set`] evaluates this rule exactly along the homotopy path;
//! [`grid_set`] and [`split_set`] are the brute-force and sample-splitting
//! baselines.

mod baseline;
mod exact;
mod set;

pub use baseline::{grid_points, grid_set, grid_set_with, grid_to_set, p_value, split_set, GridPoint};
pub use exact::{
    exact_set, exact_set_fast, interval_condition, ConformalLasso, ExactOptions, ResidualTrajectory,
};
pub use set::{BoundaryKind, Interval, PredictionSet, PredictionSetRecord};

use crate::error::{Error, Result};

/// Largest admissible rank `⌈(n+1)(1 − α)⌉` of the appended residual.
pub fn rank_threshold(n: usize, alpha: f64) -> usize {
    // the offset keeps (n+1)(1−α) that should be an integer from rounding up
    let m = (n + 1) as f64 * (1.0 - alpha);
    (m - 1e-9).ceil().max(0.0) as usize
}

/// Number of residuals (the candidate's own included) no larger in
/// magnitude than the candidate's.
pub fn conformity_rank(train_residuals: impl IntoIterator<Item = f64>, candidate_residual: f64) -> usize {
    let target = candidate_residual.abs();
    1 + train_residuals.into_iter().filter(|r| r.abs() <= target).count()
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub(crate) fn check_range(range: (f64, f64)) -> Result<()> {
    if range.0.is_finite() && range.1.is_finite() && range.0 < range.1 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "search range must satisfy y_min < y_max, got [{}, {}]",
            range.0, range.1
        )))
    }
}

/// Sample range of `y` widened by a quarter of its width on each side;
/// constant responses are widened by ±1.
pub fn default_range(y: &[f64]) -> (f64, f64) {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return (-1.0, 1.0);
    }
    let width = hi - lo;
    if width == 0.0 {
        return (lo - 1.0, hi + 1.0);
    }
    (lo - 0.25 * width, hi + 0.25 * width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_range_examples() {
        assert_eq!(default_range(&[0.0, 4.0]), (-1.0, 5.0));
        assert_eq!(default_range(&[1.0, 1.0, 1.0]), (0.0, 2.0));
        assert_eq!(default_range(&[-2.0, 0.0, 6.0]), (-4.0, 8.0));
    }

    #[test]
    fn threshold_values() {
        assert_eq!(rank_threshold(99, 0.1), 90);
        assert_eq!(rank_threshold(29, 0.1), 27);
        assert_eq!(rank_threshold(100, 0.1), 91);
        // α below 1/(n+1) admits every rank
        assert_eq!(rank_threshold(100, 0.005), 101);
        assert_eq!(rank_threshold(1, 0.5), 1);
    }

    #[test]
    fn rank_counts_the_candidate() {
        assert_eq!(conformity_rank([1.0, -2.0, 3.0], 0.0), 1);
        assert_eq!(conformity_rank([1.0, -2.0, 3.0], -2.0), 3);
        assert_eq!(conformity_rank([1.0, -2.0, 3.0], 10.0), 4);
    }
}
