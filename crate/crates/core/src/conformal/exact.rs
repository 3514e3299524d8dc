//! Exact conformal sets read off the homotopy path.

use std::time::Instant;

use nalgebra::DVector;

use super::set::{assemble, BoundaryKind, Interval, PredictionSet};
use super::{check_alpha, check_range, rank_threshold};
use crate::data::{Dataset, PenaltyConfig};
use crate::error::{Error, Result};
use crate::homotopy::{
    validate_base, Change, Direction, HomotopyContext, HomotopySegment, PathDiagnostics, QueryPoint, Tracer,
};
use crate::lasso::{self, LassoFit};
use crate::linalg::ActiveInverse;

/// Crossing roots closer than this are merged.
const ROOT_MERGE_TOL: f64 = 1e-12;

/// Affine residuals `rᵢ(t) = intercepts[i] + slopes[i]·(t − t_anchor)` on
/// one segment, for the n training rows and the appended point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrajectory {
    pub t_anchor: f64,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub query_intercept: f64,
    pub query_slope: f64,
}

impl ResidualTrajectory {
    pub fn from_segment(data: &Dataset, query: &QueryPoint, seg: &HomotopySegment) -> Self {
        let x = data.x();
        let n = data.n();
        let mut intercepts: Vec<f64> = data.y().iter().copied().collect();
        let mut slopes = vec![0.0; n];
        for ((&j, &b), &e) in seg.active.iter().zip(&seg.beta_anchor).zip(&seg.eta) {
            let col = x.column(j);
            for i in 0..n {
                intercepts[i] -= col[i] * b;
                slopes[i] -= col[i] * e;
            }
        }
        let x_new = query.x_new();
        let mut query_intercept = query.y_hat0() + seg.t_anchor;
        let mut query_slope = 1.0;
        for ((&j, &b), &e) in seg.active.iter().zip(&seg.beta_anchor).zip(&seg.eta) {
            query_intercept -= x_new[j] * b;
            query_slope -= x_new[j] * e;
        }
        Self {
            t_anchor: seg.t_anchor,
            intercepts,
            slopes,
            query_intercept,
            query_slope,
        }
    }

    pub fn residual(&self, i: usize, t: f64) -> f64 {
        self.intercepts[i] + self.slopes[i] * (t - self.t_anchor)
    }

    pub fn query_residual(&self, t: f64) -> f64 {
        self.query_intercept + self.query_slope * (t - self.t_anchor)
    }

    /// `#{i ≤ n+1 : |rᵢ(t)| ≤ |r_{n+1}(t)|}`.
    pub fn rank_at(&self, t: f64) -> usize {
        let target = self.query_residual(t).abs();
        1 + (0..self.intercepts.len())
            .filter(|&i| self.residual(i, t).abs() <= target)
            .count()
    }

    /// Whether every training residual moves strictly slower than the
    /// appended one.
    pub fn slopes_dominated(&self) -> bool {
        self.query_slope > 0.0 && self.slopes.iter().all(|s| s.abs() < self.query_slope)
    }

    /// Points in `(a, b)` where `|rᵢ| = |r_{n+1}|` for some i, sorted and
    /// deduplicated.
    pub fn crossings(&self, a: f64, b: f64) -> Vec<f64> {
        let mut roots = Vec::new();
        let dq = self.query_intercept;
        for (&ri, &si) in self.intercepts.iter().zip(&self.slopes) {
            for (c0, c1) in [(dq - ri, self.query_slope - si), (dq + ri, self.query_slope + si)] {
                if c1 != 0.0 {
                    let t = self.t_anchor - c0 / c1;
                    if t > a && t < b {
                        roots.push(t);
                    }
                }
            }
        }
        roots.sort_by(f64::total_cmp);
        roots.dedup_by(|x, y| (*x - *y).abs() <= ROOT_MERGE_TOL * y.abs().max(1.0));
        roots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExactOptions {
    /// Classify segments that satisfy the cross-leverage bound from a single
    /// order statistic instead of enumerating all rank crossings.
    pub fast: bool,
    /// Stop each direction at the end of the interval containing the anchor
    /// prediction, instead of scanning the whole range.
    pub early_stop_anchor: bool,
}

/// One piece of a segment in t-space with its membership.
#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    inside: bool,
    lo_kind: BoundaryKind,
    hi_kind: BoundaryKind,
}

/// Rank-crossing enumeration over `[seg.t_start, seg.t_end]`, ascending.
fn general_pieces(traj: &ResidualTrajectory, seg: &HomotopySegment, threshold: usize) -> Vec<Piece> {
    let (a, b) = (seg.t_start, seg.t_end);
    let roots = traj.crossings(a, b);
    let mut cuts = Vec::with_capacity(roots.len() + 2);
    cuts.push(a);
    cuts.extend(roots);
    cuts.push(b);
    let kind = |k: usize| {
        if k == 0 || k == cuts.len() - 1 {
            BoundaryKind::Breakpoint
        } else {
            BoundaryKind::RankCrossing
        }
    };
    cuts.windows(2)
        .enumerate()
        .map(|(k, w)| {
            let mid = 0.5 * (w[0] + w[1]);
            Piece {
                lo: w[0],
                hi: w[1],
                inside: traj.rank_at(mid) <= threshold,
                lo_kind: kind(k),
                hi_kind: kind(k + 1),
            }
        })
        .collect()
}

/// Single-crossing classification for a segment on which every training
/// residual moves slower than the appended one. The rank is then monotone
/// moving away from the anchor, so membership is `[anchor, t*)` with `t*`
/// the `threshold`-th smallest crossing distance.
fn fast_pieces(traj: &ResidualTrajectory, seg: &HomotopySegment, threshold: usize) -> Vec<Piece> {
    let d = seg.direction.sign();
    let len = seg.width();
    let r0 = (d * traj.query_intercept).max(0.0);
    let speed = traj.query_slope;
    let allowed = threshold.saturating_sub(1);
    let n = traj.intercepts.len();

    let cut = if allowed >= n {
        len
    } else {
        let mut dist: Vec<f64> = traj
            .intercepts
            .iter()
            .zip(&traj.slopes)
            .map(|(&ri, &si)| {
                let excess = ri.abs() - r0;
                if excess <= 0.0 {
                    0.0
                } else {
                    excess / (speed - ri.signum() * d * si)
                }
            })
            .collect();
        let (_, kth, _) = dist.select_nth_unstable_by(allowed, f64::total_cmp);
        kth.min(len)
    };

    let (near, far) = (seg.t_anchor, seg.t_far());
    let split = near + d * cut;
    let mut pieces = Vec::with_capacity(2);
    let ordered = |p: f64, q: f64| if p <= q { (p, q) } else { (q, p) };
    if cut > 0.0 {
        let (lo, hi) = ordered(near, split);
        let crossing_at_split = if cut < len {
            BoundaryKind::RankCrossing
        } else {
            BoundaryKind::Breakpoint
        };
        let (lo_kind, hi_kind) = if d > 0.0 {
            (BoundaryKind::Breakpoint, crossing_at_split)
        } else {
            (crossing_at_split, BoundaryKind::Breakpoint)
        };
        pieces.push(Piece {
            lo,
            hi,
            inside: true,
            lo_kind,
            hi_kind,
        });
    }
    if cut < len {
        let (lo, hi) = ordered(split, far);
        pieces.push(Piece {
            lo,
            hi,
            inside: false,
            lo_kind: BoundaryKind::RankCrossing,
            hi_kind: BoundaryKind::RankCrossing,
        });
    }
    if d < 0.0 {
        pieces.reverse();
    }
    pieces
}

/// Base fit plus precomputed Gram matrix, shared by all queries on one
/// dataset and penalty.
#[derive(Debug, Clone)]
pub struct ConformalLasso<'a> {
    ctx: HomotopyContext<'a>,
    base: LassoFit,
}

impl<'a> ConformalLasso<'a> {
    pub fn new(data: &'a Dataset, penalty: PenaltyConfig) -> Result<Self> {
        let base = lasso::fit(data, penalty)?;
        Self::with_base(data, base)
    }

    /// Rejects a base fit that fails the KKT check on `data`.
    pub fn with_base(data: &'a Dataset, base: LassoFit) -> Result<Self> {
        validate_base(data, &base)?;
        let ctx = HomotopyContext::new(data, base.penalty());
        Ok(Self { ctx, base })
    }

    pub fn base(&self) -> &LassoFit {
        &self.base
    }

    pub fn data(&self) -> &'a Dataset {
        self.ctx.data()
    }

    pub fn context(&self) -> &HomotopyContext<'a> {
        &self.ctx
    }

    pub fn query(&self, x_new: &DVector<f64>) -> Result<QueryPoint> {
        QueryPoint::new(&self.base, x_new.clone())
    }

    pub fn exact_set(
        &self,
        x_new: &DVector<f64>,
        alpha: f64,
        range: (f64, f64),
        opts: ExactOptions,
    ) -> Result<PredictionSet> {
        let started = Instant::now();
        check_alpha(alpha)?;
        check_range(range)?;
        let data = self.ctx.data();
        data.check_covariate(x_new)?;
        let query = self.query(x_new)?;
        let y0 = query.y_hat0();
        let threshold = rank_threshold(data.n(), alpha);

        let mut pieces = Vec::new();
        let mut diagnostics = PathDiagnostics::default();
        let mut condition_held = true;
        for (direction, limit) in [
            (Direction::Positive, range.1 - y0),
            (Direction::Negative, y0 - range.0),
        ] {
            if limit <= 0.0 {
                continue;
            }
            let mut tracer = Tracer::new(&self.ctx, &self.base, &query, direction, limit)?;
            'segments: for seg in tracer.by_ref() {
                let seg = seg?;
                let traj = ResidualTrajectory::from_segment(data, &query, &seg);
                let dominated = seg.change != Change::Refit
                    && seg.extra_ridge == 0.0
                    && traj.slopes_dominated();
                condition_held &= dominated;
                let mut seg_pieces = if opts.fast && dominated {
                    fast_pieces(&traj, &seg, threshold)
                } else {
                    general_pieces(&traj, &seg, threshold)
                };
                if direction == Direction::Negative {
                    seg_pieces.reverse();
                }
                // seg_pieces now runs outward from the anchor
                for piece in seg_pieces {
                    if piece.inside {
                        pieces.push(Interval::new(piece.lo, piece.hi, piece.lo_kind, piece.hi_kind));
                    } else if opts.early_stop_anchor {
                        break 'segments;
                    }
                }
            }
            diagnostics.absorb(&tracer.diagnostics);
        }

        let shifted = pieces
            .into_iter()
            .map(|iv| Interval::new(iv.lo + y0, iv.hi + y0, iv.lo_kind, iv.hi_kind))
            .collect();
        let mut set = PredictionSet::from_intervals(assemble(shifted, range), alpha, range);
        set.interval_condition_held = condition_held;
        set.diagnostics = diagnostics;
        set.runtime_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(set)
    }
}

/// Exact conformal set `{y ∈ range : rank of |r_{n+1}(y)| ≤ ⌈(n+1)(1−α)⌉}`,
/// enumerating every rank crossing on every path segment.
pub fn exact_set(
    data: &Dataset,
    x_new: &DVector<f64>,
    penalty: PenaltyConfig,
    alpha: f64,
    range: (f64, f64),
) -> Result<PredictionSet> {
    ConformalLasso::new(data, penalty)?.exact_set(x_new, alpha, range, ExactOptions::default())
}

/// Same set as [`exact_set`], using the single-crossing shortcut on every
/// segment where the cross-leverage bound holds.
pub fn exact_set_fast(
    data: &Dataset,
    x_new: &DVector<f64>,
    penalty: PenaltyConfig,
    alpha: f64,
    range: (f64, f64),
) -> Result<PredictionSet> {
    ConformalLasso::new(data, penalty)?.exact_set(
        x_new,
        alpha,
        range,
        ExactOptions {
            fast: true,
            early_stop_anchor: false,
        },
    )
}

/// Cross-leverage bound `maxᵢ |x_{i,J}′(G_J + ρI)⁻¹x_{new,J}| < 1` over the
/// training rows, which makes every residual move slower than the appended
/// one on support `active`.
pub fn interval_condition(data: &Dataset, x_new: &DVector<f64>, active: &[usize], rho: f64) -> Result<bool> {
    data.check_covariate(x_new)?;
    if active.is_empty() {
        return Ok(true);
    }
    if let Some(&bad) = active.iter().find(|&&j| j >= data.p()) {
        return Err(Error::InvalidInput(format!("active index {bad} out of range")));
    }
    let mut sorted = active.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let xj = data.x().select_columns(sorted.iter());
    let gram = xj.tr_mul(&xj);
    let local: Vec<usize> = (0..sorted.len()).collect();
    let inv = ActiveInverse::new(&gram, &local, rho)?;
    let xq = DVector::from_fn(sorted.len(), |k, _| x_new[sorted[k]]);
    let w = inv.inverse() * xq;
    let leverage = &xj * w;
    Ok(leverage.iter().all(|l| l.abs() < 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::grid_set;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_dim() -> Dataset {
        Dataset::from_rows(&[vec![1.0], vec![1.0]], &[1.0, 3.0]).unwrap()
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> (Dataset, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[0] - 2.0 * r[p - 1] + rng.random_range(-1.0..1.0))
            .collect();
        let x_new = DVector::from_fn(p, |_, _| rng.random_range(-1.5..1.5));
        (Dataset::from_rows(&rows, &y).unwrap(), x_new)
    }

    #[test]
    fn tiny_alpha_returns_full_range() {
        let (data, x_new) = random_problem(1, 12, 3);
        let pen = PenaltyConfig::lasso(0.5).unwrap();
        let range = (-10.0, 10.0);
        let set = exact_set(&data, &x_new, pen, 0.5 / 13.0, range).unwrap();
        assert_eq!(set.intervals.len(), 1);
        assert_eq!((set.intervals[0].lo, set.intervals[0].hi), range);
        assert_eq!(set.intervals[0].lo_kind, BoundaryKind::RangeClip);
    }

    #[test]
    fn one_dimensional_set_matches_grid_oracle() {
        let data = one_dim();
        let pen = PenaltyConfig::lasso(1.0).unwrap();
        let x_new = DVector::from_vec(vec![1.0]);
        let range = (-5.0, 5.0);
        let set = exact_set(&data, &x_new, pen, 0.5, range).unwrap();
        assert!(set.is_single_interval);
        assert!(set.contains(1.5));
        let grid = grid_set(&data, &x_new, pen, 0.5, range, 1e-4).unwrap();
        let inside: Vec<f64> = grid.iter().filter(|g| g.in_set).map(|g| g.y).collect();
        let (glo, ghi) = (inside[0], *inside.last().unwrap());
        let iv = set.intervals[0];
        assert!((iv.lo - glo).abs() <= 2e-4, "{} vs {glo}", iv.lo);
        assert!((iv.hi - ghi).abs() <= 2e-4, "{} vs {ghi}", iv.hi);
    }

    #[test]
    fn fast_path_agrees_with_general() {
        for seed in 0..30 {
            let (data, x_new) = random_problem(seed, 25, 6);
            let pen = PenaltyConfig::new(0.8, if seed % 2 == 0 { 0.0 } else { 0.5 }).unwrap();
            let cl = ConformalLasso::new(&data, pen).unwrap();
            let range = super::super::default_range(data.y().as_slice());
            for alpha in [0.05, 0.1, 0.3] {
                let slow = cl.exact_set(&x_new, alpha, range, ExactOptions::default()).unwrap();
                let fast = cl
                    .exact_set(&x_new, alpha, range, ExactOptions { fast: true, early_stop_anchor: false })
                    .unwrap();
                assert_eq!(slow.intervals.len(), fast.intervals.len(), "seed {seed}");
                for (a, b) in slow.intervals.iter().zip(&fast.intervals) {
                    assert!((a.lo - b.lo).abs() <= 1e-9 && (a.hi - b.hi).abs() <= 1e-9, "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn interval_condition_examples() {
        let data = Dataset::from_rows(&[vec![2.0, 1.0]], &[1.0]).unwrap();
        let x1 = data.row(0);
        assert!(interval_condition(&data, &x1, &[], 0.0).unwrap());
        // x_new = x_1, n = 1, one active coordinate: leverage is exactly 1
        assert!(!interval_condition(&data, &x1, &[0], 0.0).unwrap());
        let collinear = Dataset::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 2.0]).unwrap();
        assert!(matches!(
            interval_condition(&collinear, &DVector::from_vec(vec![1.0, 1.0]), &[0, 1], 0.0),
            Err(Error::SingularGram { .. })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..50 {
            let (data, x_new) = random_problem(seed, 15, 5);
            let max_row = (0..data.n()).map(|i| data.row(i).norm()).fold(0.0, f64::max);
            let rho = x_new.norm() * max_row;
            let mut active: Vec<usize> = (0..5).filter(|_| rng.random_bool(0.6)).collect();
            active.dedup();
            assert!(interval_condition(&data, &x_new, &active, rho).unwrap());
        }
    }

    #[test]
    fn early_stop_keeps_anchor_interval() {
        for seed in 0..10 {
            let (data, x_new) = random_problem(100 + seed, 20, 4);
            let cl = ConformalLasso::new(&data, PenaltyConfig::lasso(0.3).unwrap()).unwrap();
            let range = super::super::default_range(data.y().as_slice());
            let y0 = cl.base().predict(&x_new);
            let full = cl.exact_set(&x_new, 0.1, range, ExactOptions::default()).unwrap();
            let early = cl
                .exact_set(&x_new, 0.1, range, ExactOptions { fast: false, early_stop_anchor: true })
                .unwrap();
            assert_eq!(early.intervals.len(), 1);
            let anchor = full.intervals.iter().find(|iv| iv.contains(y0)).unwrap();
            assert!((anchor.lo - early.intervals[0].lo).abs() < 1e-12);
            assert!((anchor.hi - early.intervals[0].hi).abs() < 1e-12);
        }
    }

    #[test]
    fn query_residual_slope_is_positive() {
        let (data, x_new) = random_problem(5, 30, 8);
        let pen = PenaltyConfig::lasso(0.2).unwrap();
        let base = lasso::fit(&data, pen).unwrap();
        let q = QueryPoint::new(&base, x_new).unwrap();
        let path = crate::homotopy::trace(&data, &base, &q, -8.0, 8.0).unwrap();
        for seg in path.segments() {
            let traj = ResidualTrajectory::from_segment(&data, &q, seg);
            assert!(traj.query_slope > 0.0);
            if seg.t_anchor == 0.0 {
                assert!(traj.query_residual(0.0).abs() < 1e-12);
            }
        }
    }
}
