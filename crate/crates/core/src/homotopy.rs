//! Piecewise-linear path of the Lasso solution when one extra point
//! `(x_new, ŷ₀ + t)` is appended, with `ŷ₀ = x_new′β̂` the base prediction.
//!
//! At `t = 0` the appended point is fitted exactly, so the solution equals the
//! base fit. Moving `t` away from zero, the support stays fixed between
//! breakpoints, the active coefficients move linearly with slope
//!
//! ```text
//! η = (G_J + ρI + x_J x_Jᵀ)⁻¹ x_J = M x_J / (1 + x_Jᵀ M x_J),   M = (G_J + ρI)⁻¹
//! ```
//!
//! (`G = XᵀX` over the original rows), and the inactive duals move linearly
//! with slope `γ_j = x_j(1 − x_Jᵀη) − G_{j,J} η`. A breakpoint is the first
//! `t` at which an active coefficient hits zero or an inactive dual hits `±λ`.
//!
//! Degenerate situations (two coordinates changing at once, a singular active
//! block, a base fit with an inactive dual already on the boundary, or a sign
//! check failing after a change) are handled by a cold refit of the augmented
//! problem slightly past the trouble point, joined to the path by a short
//! bridging segment.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{Dataset, PenaltyConfig};
use crate::error::{Error, Result};
use crate::lasso::{self, LassoFit, SolverOptions};
use crate::linalg::ActiveInverse;

/// Two breakpoint candidates closer than `TIE_TOL·max(1, |t|)` are a tie.
pub const TIE_TOL: f64 = 1e-9;
/// Distance past a trouble point at which the fallback refit is taken.
pub const REFIT_OFFSET: f64 = 1e-7;
/// Inactive duals are re-derived from the primal every this many segments.
pub const DUAL_REFRESH_EVERY: usize = 20;
/// Relative ridge added to a singular active block.
pub const SINGULAR_RIDGE: f64 = 1e-8;
/// KKT tolerance a base fit must meet before it can anchor a path.
pub const BASE_KKT_TOL: f64 = 1e-6;

/// The covariate of the appended point and its anchor prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPoint {
    x_new: DVector<f64>,
    y_hat0: f64,
}

impl QueryPoint {
    /// `y_hat0` is recomputed from `base`, never taken from the caller.
    pub fn new(base: &LassoFit, x_new: DVector<f64>) -> Result<Self> {
        if x_new.len() != base.beta().len() {
            return Err(Error::DimensionMismatch {
                expected: base.beta().len(),
                found: x_new.len(),
            });
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite query covariate".into()));
        }
        let y_hat0 = base.predict(&x_new);
        Ok(Self { x_new, y_hat0 })
    }

    pub fn x_new(&self) -> &DVector<f64> {
        &self.x_new
    }

    pub fn y_hat0(&self) -> f64 {
        self.y_hat0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }
}

/// A support change (or other event) at a segment boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "coordinate", rename_all = "lowercase")]
pub enum Change {
    /// The path origin `t = 0`.
    Start,
    /// Coordinate left the support.
    Deletion(usize),
    /// Coordinate entered the support.
    Addition(usize),
    /// The segment was cut at the end of the requested range.
    Clipped,
    /// The segment bridges to a fallback refit.
    Refit,
}

impl Change {
    pub fn coordinate(self) -> Option<usize> {
        match self {
            Change::Deletion(j) | Change::Addition(j) => Some(j),
            _ => None,
        }
    }
}

/// One linear piece of the path.
///
/// `t_start < t_end` always (except the degenerate anchor of an empty
/// range). Values are anchored at `t_anchor`, the end nearer `t = 0`:
/// `β_J(t) = beta_anchor + eta·(t − t_anchor)`, `β_{Jᶜ}(t) = 0` and
/// `v_{Jᶜ}(t) = v_inactive_anchor + gamma·(t − t_anchor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomotopySegment {
    pub t_start: f64,
    pub t_end: f64,
    pub t_anchor: f64,
    pub direction: Direction,
    pub active: Vec<usize>,
    pub eta: Vec<f64>,
    pub inactive: Vec<usize>,
    pub gamma: Vec<f64>,
    pub beta_anchor: Vec<f64>,
    pub v_inactive_anchor: Vec<f64>,
    /// How the segment began (at `t_anchor`).
    pub entered_by: Change,
    /// What ends the segment (at the far end from `t_anchor`).
    pub change: Change,
    /// Extra ridge used because the active block was singular.
    pub extra_ridge: f64,
}

impl HomotopySegment {
    pub fn contains(&self, t: f64) -> bool {
        self.t_start <= t && t <= self.t_end
    }

    /// The far end of the segment in the direction of travel.
    pub fn t_far(&self) -> f64 {
        match self.direction {
            Direction::Positive => self.t_end,
            Direction::Negative => self.t_start,
        }
    }

    pub fn beta_at(&self, t: f64, p: usize) -> DVector<f64> {
        let mut beta = DVector::zeros(p);
        let dt = t - self.t_anchor;
        for ((&j, &b), &e) in self.active.iter().zip(&self.beta_anchor).zip(&self.eta) {
            beta[j] = b + e * dt;
        }
        beta
    }

    pub fn dual_inactive_at(&self, t: f64) -> Vec<f64> {
        let dt = t - self.t_anchor;
        self.v_inactive_anchor
            .iter()
            .zip(&self.gamma)
            .map(|(v, g)| v + g * dt)
            .collect()
    }

    pub fn width(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PathDiagnostics {
    pub segments: usize,
    pub support_changes: usize,
    pub fallback_refits: usize,
    pub tie_events: usize,
    pub ridge_fallbacks: usize,
    pub sign_check_failures: usize,
}

impl PathDiagnostics {
    pub fn absorb(&mut self, other: &PathDiagnostics) {
        self.segments += other.segments;
        self.support_changes += other.support_changes;
        self.fallback_refits += other.fallback_refits;
        self.tie_events += other.tie_events;
        self.ridge_fallbacks += other.ridge_fallbacks;
        self.sign_check_failures += other.sign_check_failures;
    }
}

/// The traced path over `[t_lo, t_hi]`.
///
/// `positive_segments` run outward from 0 towards `t_hi`;
/// `negative_segments` are stored in increasing `t`, ending at 0.
#[derive(Debug, Clone)]
pub struct HomotopyPath {
    pub base: LassoFit,
    pub query: QueryPoint,
    pub positive_segments: Vec<HomotopySegment>,
    pub negative_segments: Vec<HomotopySegment>,
    pub diagnostics: PathDiagnostics,
}

impl HomotopyPath {
    pub fn segment_at(&self, t: f64) -> Option<&HomotopySegment> {
        let side = if t >= 0.0 {
            &self.positive_segments
        } else {
            &self.negative_segments
        };
        side.iter().find(|s| s.contains(t)).or_else(|| {
            // t = 0 with only one side traced
            self.positive_segments
                .iter()
                .chain(&self.negative_segments)
                .find(|s| s.contains(t))
        })
    }

    /// `β̂(t)`, or `None` outside the traced range.
    pub fn beta_at(&self, t: f64) -> Option<DVector<f64>> {
        if t == 0.0 {
            return Some(self.base.beta().clone());
        }
        self.segment_at(t).map(|s| s.beta_at(t, self.base.beta().len()))
    }

    pub fn segments(&self) -> impl Iterator<Item = &HomotopySegment> {
        self.negative_segments.iter().chain(&self.positive_segments)
    }

    /// One JSON object per segment, one per line.
    pub fn dump_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for seg in self.segments() {
            let record = SegmentRecord {
                direction: seg.direction,
                t_start: seg.t_start,
                t_end: seg.t_end,
                active_size: seg.active.len(),
                change: seg.change,
                coordinate: seg.change.coordinate(),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct SegmentRecord {
    direction: Direction,
    t_start: f64,
    t_end: f64,
    active_size: usize,
    change: Change,
    coordinate: Option<usize>,
}

/// Data shared by every path traced on one dataset and penalty.
#[derive(Debug, Clone)]
pub struct HomotopyContext<'a> {
    data: &'a Dataset,
    gram: DMatrix<f64>,
    penalty: PenaltyConfig,
}

impl<'a> HomotopyContext<'a> {
    pub fn new(data: &'a Dataset, penalty: PenaltyConfig) -> Self {
        let gram = data.x().tr_mul(data.x());
        Self {
            data,
            gram,
            penalty,
        }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn penalty(&self) -> PenaltyConfig {
        self.penalty
    }

    /// Cold fit of the augmented problem with `y_{n+1} = ŷ₀ + t`.
    pub fn augmented_fit(
        &self,
        query: &QueryPoint,
        t: f64,
        warm: Option<&DVector<f64>>,
    ) -> Result<LassoFit> {
        let aug = self.data.augmented(query.x_new(), query.y_hat0() + t)?;
        lasso::fit_with(&aug, self.penalty, warm, &SolverOptions::default())
    }

    /// `G + x_new x_newᵀ`, the Gram matrix of the augmented design.
    pub(crate) fn augmented_gram(&self, x_new: &DVector<f64>) -> DMatrix<f64> {
        let mut g = self.gram.clone();
        g.ger(1.0, x_new, x_new, 1.0);
        g
    }
}

/// Inverts the `active` block of `gram + ρI`, adding a small relative ridge
/// if the block is singular. Returns the extra ridge used.
fn inverse_with_fallback(gram: &DMatrix<f64>, rho: f64, active: &[usize]) -> Result<(ActiveInverse, f64)> {
    match ActiveInverse::new(gram, active, rho) {
        Ok(inv) => Ok((inv, 0.0)),
        Err(Error::SingularGram { .. }) => {
            let extra = singular_ridge(gram, active);
            Ok((ActiveInverse::new(gram, active, rho + extra)?, extra))
        }
        Err(e) => Err(e),
    }
}

fn singular_ridge(gram: &DMatrix<f64>, active: &[usize]) -> f64 {
    if active.is_empty() {
        return 0.0;
    }
    let trace: f64 = active.iter().map(|&j| gram[(j, j)]).sum();
    let extra = SINGULAR_RIDGE * trace / active.len() as f64;
    if extra > 0.0 {
        extra
    } else {
        SINGULAR_RIDGE
    }
}

/// Primal and dual slopes on a fixed support.
#[derive(Debug, Clone)]
pub(crate) struct Directions {
    pub eta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub inactive: Vec<usize>,
}

/// `inv` holds `(G_J + ρI + x_J x_Jᵀ)⁻¹`, so `η = inv·x_J`.
fn directions(gram: &DMatrix<f64>, x_new: &DVector<f64>, inv: &ActiveInverse) -> Directions {
    let active = inv.active();
    let p = x_new.len();
    let xj = DVector::from_fn(active.len(), |k, _| x_new[active[k]]);
    let eta = inv.inverse() * &xj;
    let proj = xj.dot(&eta);
    let mut inactive = Vec::with_capacity(p - active.len());
    let mut gamma = Vec::with_capacity(p - active.len());
    let mut a = 0;
    for j in 0..p {
        if a < active.len() && active[a] == j {
            a += 1;
            continue;
        }
        let cross: f64 = active.iter().zip(eta.iter()).map(|(&k, e)| gram[(j, k)] * e).sum();
        inactive.push(j);
        gamma.push(x_new[j] * (1.0 - proj) - cross);
    }
    Directions {
        eta,
        gamma: DVector::from_vec(gamma),
        inactive,
    }
}

/// Slopes `(η, γ)` of the path on support `active` (sorted internally).
///
/// `η` is indexed by the sorted support and `γ` by its complement.
pub fn segment_directions(
    data: &Dataset,
    query: &QueryPoint,
    active: &[usize],
    penalty: PenaltyConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if query.x_new().len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: query.x_new().len(),
        });
    }
    if let Some(&bad) = active.iter().find(|&&j| j >= data.p()) {
        return Err(Error::InvalidInput(format!("active index {bad} out of range")));
    }
    let ctx = HomotopyContext::new(data, penalty);
    let inv = ActiveInverse::new(&ctx.augmented_gram(query.x_new()), active, penalty.rho())?;
    let d = directions(&ctx.gram, query.x_new(), &inv);
    Ok((d.eta, d.gamma))
}

/// State at the start of a segment, for breakpoint search.
#[derive(Debug, Clone, Copy)]
pub struct SegmentStart<'s> {
    pub t: f64,
    pub direction: Direction,
    pub active: &'s [usize],
    pub beta_active: &'s [f64],
    pub eta: &'s [f64],
    pub inactive: &'s [usize],
    pub v_inactive: &'s [f64],
    pub gamma: &'s [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    /// Absolute position of the next breakpoint; infinite if none.
    pub t_next: f64,
    pub change: Change,
    pub tie_detected: bool,
}

/// `z` if positive, otherwise +∞.
#[inline]
fn positive_part(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        f64::INFINITY
    }
}

/// Distance (in the direction of travel) to the first support change.
fn breakpoint_distance(seg: &SegmentStart<'_>, lambda: f64) -> (f64, Change, bool) {
    let d = seg.direction.sign();
    let mut best = (f64::INFINITY, Change::Clipped);
    let mut second = f64::INFINITY;
    let mut consider = |tau: f64, change: Change| {
        if tau < best.0 {
            second = best.0;
            best = (tau, change);
        } else if tau < second {
            second = tau;
        }
    };
    for ((&j, &b), &e) in seg.active.iter().zip(seg.beta_active).zip(seg.eta) {
        let slope = d * e;
        if slope != 0.0 {
            consider(positive_part(-b / slope), Change::Deletion(j));
        }
    }
    let slack = lasso::DUAL_BOUNDARY_TOL * lambda.max(1.0);
    for ((&j, &v), &g) in seg.inactive.iter().zip(seg.v_inactive).zip(seg.gamma) {
        let slope = d * g;
        if slope == 0.0 {
            continue;
        }
        let target = slope.signum() * lambda;
        let mut tau = positive_part((target - v) / slope);
        // already on (or numerically past) the boundary and moving outward
        if tau.is_infinite() && v.signum() == slope.signum() && v.abs() >= lambda - slack {
            tau = 0.0;
        }
        consider(tau, Change::Addition(j));
    }
    let (tau, change) = best;
    let t_next = seg.t + d * tau;
    let tie = tau.is_finite()
        && second.is_finite()
        && second - tau <= TIE_TOL * t_next.abs().max(1.0);
    (tau, change, tie)
}

/// The next point of change after `seg.t`.
///
/// Deletion times are `(−β_j/η_j)₊₊` over the support and addition times
/// `((sign(γ_j)λ − v_j)/γ_j)₊₊` over its complement, with slopes taken in
/// the direction of travel; `(z)₊₊` is `z` when positive and +∞ otherwise,
/// and a zero slope never produces a finite time.
pub fn next_breakpoint(seg: &SegmentStart<'_>, lambda: f64) -> Breakpoint {
    let (tau, change, tie_detected) = breakpoint_distance(seg, lambda);
    Breakpoint {
        t_next: seg.t + seg.direction.sign() * tau,
        change,
        tie_detected,
    }
}

#[derive(Debug, Clone, Copy)]
enum SignCheck {
    /// Dual of a freshly deleted coordinate must move back inside.
    Deleted { j: usize },
    /// A freshly added coefficient must grow with the sign of its dual.
    Added { j: usize },
}

/// Walks the path outward from `t = 0` in one direction.
pub(crate) struct Tracer<'c, 'a> {
    ctx: &'c HomotopyContext<'a>,
    query: &'c QueryPoint,
    direction: Direction,
    /// Distance from 0 at which tracing stops.
    limit: f64,
    t: f64,
    beta: DVector<f64>,
    dual: DVector<f64>,
    /// Inverse of the active block of `aug_gram + ρI`.
    inv: ActiveInverse,
    aug_gram: DMatrix<f64>,
    extra_ridge: f64,
    entered_by: Change,
    pending_check: Option<SignCheck>,
    needs_refit: bool,
    cap: usize,
    since_refresh: usize,
    done: bool,
    pub diagnostics: PathDiagnostics,
}

impl<'c, 'a> Tracer<'c, 'a> {
    pub fn new(
        ctx: &'c HomotopyContext<'a>,
        base: &LassoFit,
        query: &'c QueryPoint,
        direction: Direction,
        limit: f64,
    ) -> Result<Self> {
        let aug_gram = ctx.augmented_gram(query.x_new());
        let (inv, extra_ridge) = inverse_with_fallback(&aug_gram, ctx.penalty().rho(), base.active())?;
        let data = ctx.data();
        let mut diagnostics = PathDiagnostics::default();
        if extra_ridge > 0.0 {
            diagnostics.ridge_fallbacks += 1;
        }
        let needs_refit = !base.boundary_ties().is_empty();
        if needs_refit {
            diagnostics.tie_events += 1;
        }
        let mut dual = base.dual().clone();
        let lambda = ctx.penalty().lambda();
        for &j in base.active() {
            dual[j] = base.beta()[j].signum() * lambda;
        }
        Ok(Self {
            ctx,
            query,
            direction,
            limit: limit.max(0.0),
            t: 0.0,
            beta: base.beta().clone(),
            dual,
            inv,
            aug_gram,
            extra_ridge,
            entered_by: Change::Start,
            pending_check: None,
            needs_refit,
            cap: 10 * (data.n() + data.p()),
            since_refresh: 0,
            done: false,
            diagnostics,
        })
    }

    fn remaining(&self) -> f64 {
        self.limit - self.direction.sign() * self.t
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    fn emit(&mut self, dirs: &Directions, tau: f64, change: Change) -> HomotopySegment {
        let d = self.direction.sign();
        let t_far = self.t + d * tau;
        let (t_start, t_end) = if d > 0.0 { (self.t, t_far) } else { (t_far, self.t) };
        let active = self.inv.active().to_vec();
        let beta_anchor = active.iter().map(|&j| self.beta[j]).collect();
        let v_inactive_anchor = dirs.inactive.iter().map(|&j| self.dual[j]).collect();
        self.diagnostics.segments += 1;
        HomotopySegment {
            t_start,
            t_end,
            t_anchor: self.t,
            direction: self.direction,
            active,
            eta: dirs.eta.as_slice().to_vec(),
            inactive: dirs.inactive.clone(),
            gamma: dirs.gamma.as_slice().to_vec(),
            beta_anchor,
            v_inactive_anchor,
            entered_by: self.entered_by,
            change,
            extra_ridge: self.extra_ridge,
        }
    }

    /// Moves the state `tau` along the current directions.
    fn advance(&mut self, dirs: &Directions, tau: f64, exact_t: Option<f64>) {
        let step = self.direction.sign() * tau;
        for (&j, &e) in self.inv.active().iter().zip(dirs.eta.iter()) {
            self.beta[j] += e * step;
        }
        for (&j, &g) in dirs.inactive.iter().zip(dirs.gamma.iter()) {
            self.dual[j] += g * step;
        }
        self.t = exact_t.unwrap_or(self.t + step);
    }

    fn rebuild_inverse(&mut self, active: &[usize]) -> Result<()> {
        let (inv, extra) = inverse_with_fallback(&self.aug_gram, self.ctx.penalty().rho(), active)?;
        if extra > 0.0 {
            self.diagnostics.ridge_fallbacks += 1;
        }
        self.inv = inv;
        self.extra_ridge = extra;
        Ok(())
    }

    fn apply_change(&mut self, change: Change) -> Result<()> {
        let lambda = self.ctx.penalty().lambda();
        match change {
            Change::Deletion(j) => {
                self.beta[j] = 0.0;
                let mut active = self.inv.active().to_vec();
                active.retain(|&k| k != j);
                if self.extra_ridge > 0.0 {
                    self.rebuild_inverse(&active)?;
                } else {
                    self.inv.remove(&self.aug_gram, j)?;
                }
                self.pending_check = Some(SignCheck::Deleted { j });
            }
            Change::Addition(j) => {
                self.beta[j] = 0.0;
                self.dual[j] = self.dual[j].signum() * lambda;
                let mut active = self.inv.active().to_vec();
                active.push(j);
                if self.extra_ridge > 0.0 {
                    self.rebuild_inverse(&active)?;
                } else if let Err(Error::SingularGram { .. }) = self.inv.insert(&self.aug_gram, j) {
                    self.rebuild_inverse(&active)?;
                }
                self.pending_check = Some(SignCheck::Added { j });
            }
            _ => {}
        }
        self.diagnostics.support_changes += 1;
        self.entered_by = change;
        Ok(())
    }

    fn check_holds(&self, check: SignCheck, dirs: &Directions) -> bool {
        let d = self.direction.sign();
        match check {
            SignCheck::Deleted { j } => match dirs.inactive.binary_search(&j) {
                Ok(k) => d * dirs.gamma[k] * self.dual[j].signum() <= 0.0,
                Err(_) => false,
            },
            SignCheck::Added { j } => match self.inv.active().binary_search(&j) {
                Ok(k) => d * dirs.eta[k] * self.dual[j].signum() >= 0.0,
                Err(_) => false,
            },
        }
    }

    /// Recomputes every dual coordinate from the current primal.
    fn refresh_dual(&mut self) {
        let data = self.ctx.data();
        let lambda = self.ctx.penalty().lambda();
        let resid = data.y() - data.x() * &self.beta;
        let x_new = self.query.x_new();
        let r_new = self.query.y_hat0() + self.t - x_new.dot(&self.beta);
        let mut dual = data.x().tr_mul(&resid) + x_new * r_new - &self.beta * self.ctx.penalty().rho();
        for &j in self.inv.active() {
            dual[j] = self.beta[j].signum() * lambda;
        }
        self.dual = dual;
        self.since_refresh = 0;
    }

    /// Cold refit just past the current point, bridged by one segment.
    fn refit(&mut self) -> Result<HomotopySegment> {
        let d = self.direction.sign();
        let tau = REFIT_OFFSET.min(self.remaining());
        let t_ref = self.t + d * tau;
        let fit = self.ctx.augmented_fit(self.query, t_ref, Some(&self.beta))?;
        self.diagnostics.fallback_refits += 1;
        self.needs_refit = false;
        self.pending_check = None;

        let lambda = self.ctx.penalty().lambda();
        let p = self.beta.len();
        let mut dual_ref = fit.dual().clone();
        for &j in fit.active() {
            dual_ref[j] = fit.beta()[j].signum() * lambda;
        }
        let union: Vec<usize> = (0..p)
            .filter(|&j| self.beta[j] != 0.0 || fit.beta()[j] != 0.0)
            .collect();
        let inactive: Vec<usize> = (0..p).filter(|j| union.binary_search(j).is_err()).collect();
        let dt = t_ref - self.t;
        let (t_start, t_end) = if d > 0.0 { (self.t, t_ref) } else { (t_ref, self.t) };
        let seg = HomotopySegment {
            t_start,
            t_end,
            t_anchor: self.t,
            direction: self.direction,
            eta: union.iter().map(|&j| (fit.beta()[j] - self.beta[j]) / dt).collect(),
            beta_anchor: union.iter().map(|&j| self.beta[j]).collect(),
            gamma: inactive.iter().map(|&j| (dual_ref[j] - self.dual[j]) / dt).collect(),
            v_inactive_anchor: inactive.iter().map(|&j| self.dual[j]).collect(),
            active: union,
            inactive,
            entered_by: self.entered_by,
            change: Change::Refit,
            extra_ridge: 0.0,
        };
        self.diagnostics.segments += 1;
        self.t = t_ref;
        self.beta = fit.beta().clone();
        self.dual = dual_ref;
        self.entered_by = Change::Refit;
        self.rebuild_inverse(fit.active())?;
        self.since_refresh = 0;
        Ok(seg)
    }

    fn step(&mut self) -> Result<Option<HomotopySegment>> {
        let lambda = self.ctx.penalty().lambda();
        let mut immediate_changes = 0;
        loop {
            let remaining = self.remaining();
            if remaining <= 0.0 {
                return Ok(None);
            }
            if self.diagnostics.segments >= self.cap {
                return Err(Error::SegmentCap { cap: self.cap });
            }
            if self.needs_refit {
                return self.refit().map(Some);
            }
            let dirs = directions(self.ctx.gram(), self.query.x_new(), &self.inv);
            if let Some(check) = self.pending_check.take() {
                if !self.check_holds(check, &dirs) {
                    self.diagnostics.sign_check_failures += 1;
                    self.needs_refit = true;
                    continue;
                }
            }
            let beta_active: Vec<f64> = self.inv.active().iter().map(|&j| self.beta[j]).collect();
            let v_inactive: Vec<f64> = dirs.inactive.iter().map(|&j| self.dual[j]).collect();
            let start = SegmentStart {
                t: self.t,
                direction: self.direction,
                active: self.inv.active(),
                beta_active: &beta_active,
                eta: dirs.eta.as_slice(),
                inactive: &dirs.inactive,
                v_inactive: &v_inactive,
                gamma: dirs.gamma.as_slice(),
            };
            let (tau, change, tie) = breakpoint_distance(&start, lambda);

            if tau >= remaining {
                let seg = self.emit(&dirs, remaining, Change::Clipped);
                let end = self.direction.sign() * self.limit;
                self.advance(&dirs, remaining, Some(end));
                return Ok(Some(seg));
            }
            if tau <= 0.0 {
                immediate_changes += 1;
                if immediate_changes > 3 || tie {
                    self.needs_refit = true;
                    self.diagnostics.tie_events += usize::from(tie);
                } else {
                    self.apply_change(change)?;
                }
                continue;
            }

            let seg = self.emit(&dirs, tau, change);
            self.advance(&dirs, tau, None);
            if tie {
                self.diagnostics.tie_events += 1;
                self.needs_refit = true;
            } else {
                self.apply_change(change)?;
            }
            self.since_refresh += 1;
            if self.since_refresh >= DUAL_REFRESH_EVERY {
                self.refresh_dual();
            }
            return Ok(Some(seg));
        }
    }
}

impl Iterator for Tracer<'_, '_> {
    type Item = Result<HomotopySegment>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.step() {
            Ok(Some(seg)) => Some(Ok(seg)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub(crate) fn validate_base(data: &Dataset, base: &LassoFit) -> Result<()> {
    if base.beta().len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: base.beta().len(),
        });
    }
    let report = lasso::check_kkt(data, base, BASE_KKT_TOL);
    if !report.pass {
        return Err(Error::InvalidInput(format!(
            "base fit is not optimal (KKT violation {:.3e})",
            report.max_violation()
        )));
    }
    Ok(())
}

/// Traces the path over `[t_lo, t_hi]` (which must contain 0).
pub fn trace(
    data: &Dataset,
    base: &LassoFit,
    query: &QueryPoint,
    t_lo: f64,
    t_hi: f64,
) -> Result<HomotopyPath> {
    let ctx = HomotopyContext::new(data, base.penalty());
    trace_with(&ctx, base, query, t_lo, t_hi)
}

pub fn trace_with(
    ctx: &HomotopyContext<'_>,
    base: &LassoFit,
    query: &QueryPoint,
    t_lo: f64,
    t_hi: f64,
) -> Result<HomotopyPath> {
    if !(t_lo <= 0.0 && 0.0 <= t_hi) {
        return Err(Error::InvalidInput(format!(
            "trace range [{t_lo}, {t_hi}] must contain 0"
        )));
    }
    validate_base(ctx.data(), base)?;
    let mut diagnostics = PathDiagnostics::default();

    let mut positive_segments = Vec::new();
    let mut tracer = Tracer::new(ctx, base, query, Direction::Positive, t_hi)?;
    for seg in tracer.by_ref() {
        positive_segments.push(seg?);
    }
    diagnostics.absorb(&tracer.diagnostics);

    let mut negative_segments = Vec::new();
    let mut tracer = Tracer::new(ctx, base, query, Direction::Negative, -t_lo)?;
    for seg in tracer.by_ref() {
        negative_segments.push(seg?);
    }
    diagnostics.absorb(&tracer.diagnostics);
    negative_segments.reverse();

    if positive_segments.is_empty() && negative_segments.is_empty() {
        positive_segments.push(anchor_segment(ctx, base, query));
    }
    Ok(HomotopyPath {
        base: base.clone(),
        query: query.clone(),
        positive_segments,
        negative_segments,
        diagnostics,
    })
}

/// Zero-width segment at `t = 0` for an empty range.
fn anchor_segment(ctx: &HomotopyContext<'_>, base: &LassoFit, query: &QueryPoint) -> HomotopySegment {
    let p = base.beta().len();
    let active = base.active().to_vec();
    let inactive: Vec<usize> = (0..p).filter(|j| active.binary_search(j).is_err()).collect();
    let (eta, gamma) = match ActiveInverse::new(&ctx.augmented_gram(query.x_new()), &active, ctx.penalty().rho()) {
        Ok(inv) => {
            let d = directions(ctx.gram(), query.x_new(), &inv);
            (d.eta.as_slice().to_vec(), d.gamma.as_slice().to_vec())
        }
        Err(_) => (vec![0.0; active.len()], vec![0.0; inactive.len()]),
    };
    HomotopySegment {
        t_start: 0.0,
        t_end: 0.0,
        t_anchor: 0.0,
        direction: Direction::Positive,
        beta_anchor: active.iter().map(|&j| base.beta()[j]).collect(),
        v_inactive_anchor: inactive.iter().map(|&j| base.dual()[j]).collect(),
        active,
        eta,
        inactive,
        gamma,
        entered_by: Change::Start,
        change: Change::Clipped,
        extra_ridge: 0.0,
    }
}

/// Fit on `data ∪ {(x, y)}` obtained by walking the path from the base fit.
pub fn online_update(
    data: &Dataset,
    base: &LassoFit,
    x: &DVector<f64>,
    y: f64,
    penalty: PenaltyConfig,
) -> Result<LassoFit> {
    online_update_traced(data, base, x, y, penalty).map(|(fit, _)| fit)
}

/// As [`online_update`], also returning the path diagnostics.
pub fn online_update_traced(
    data: &Dataset,
    base: &LassoFit,
    x: &DVector<f64>,
    y: f64,
    penalty: PenaltyConfig,
) -> Result<(LassoFit, PathDiagnostics)> {
    if penalty != base.penalty() {
        return Err(Error::InvalidInput(
            "online update penalty differs from the base fit's penalty".into(),
        ));
    }
    if !y.is_finite() {
        return Err(Error::InvalidInput("non-finite response".into()));
    }
    validate_base(data, base)?;
    let query = QueryPoint::new(base, x.clone())?;
    let augmented = data.augmented(x, y)?;
    let t_star = y - query.y_hat0();
    if t_star == 0.0 {
        return Ok((LassoFit::from_beta(&augmented, base.beta().clone(), penalty)?, PathDiagnostics::default()));
    }
    let ctx = HomotopyContext::new(data, penalty);
    let direction = if t_star > 0.0 { Direction::Positive } else { Direction::Negative };
    let mut tracer = Tracer::new(&ctx, base, &query, direction, t_star.abs())?;
    for seg in tracer.by_ref() {
        seg?;
    }
    let beta = refine_on_support(&augmented, tracer.beta(), penalty);
    Ok((LassoFit::from_beta(&augmented, beta, penalty)?, tracer.diagnostics))
}

/// Exact solve on the support and signs of `beta`; keeps `beta` if the solve
/// fails or flips a sign.
fn refine_on_support(data: &Dataset, beta: &DVector<f64>, penalty: PenaltyConfig) -> DVector<f64> {
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() {
        return beta.clone();
    }
    let xj = data.x().select_columns(active.iter());
    let mut gram = xj.tr_mul(&xj);
    for k in 0..active.len() {
        gram[(k, k)] += penalty.rho();
    }
    let mut rhs = xj.tr_mul(data.y());
    for (k, &j) in active.iter().enumerate() {
        rhs[k] -= penalty.lambda() * beta[j].signum();
    }
    let Some(sol) = gram.cholesky().map(|c| c.solve(&rhs)) else {
        return beta.clone();
    };
    let consistent = active
        .iter()
        .zip(sol.iter())
        .all(|(&j, &b)| b.is_finite() && b.signum() == beta[j].signum() && b != 0.0);
    if !consistent {
        return beta.clone();
    }
    let mut out = beta.clone();
    for (&j, &b) in active.iter().zip(sol.iter()) {
        out[j] = b;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_dim() -> (Dataset, LassoFit) {
        let data = Dataset::from_rows(&[vec![1.0], vec![1.0]], &[1.0, 3.0]).unwrap();
        let fit = lasso::fit(&data, PenaltyConfig::lasso(1.0).unwrap()).unwrap();
        (data, fit)
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> (Dataset, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 2.0 * r[0] - r[1 % p] + rng.random_range(-0.5..0.5))
            .collect();
        let x_new = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        (Dataset::from_rows(&rows, &y).unwrap(), x_new)
    }

    #[test]
    fn empty_support_directions() {
        let (data, _) = random_problem(1, 10, 4);
        let zero = lasso::fit(&data, PenaltyConfig::lasso(1e6).unwrap()).unwrap();
        let q = QueryPoint::new(&zero, DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5])).unwrap();
        let (eta, gamma) = segment_directions(&data, &q, &[], zero.penalty()).unwrap();
        assert_eq!(eta.len(), 0);
        assert_eq!(gamma.as_slice(), q.x_new().as_slice());
    }

    #[test]
    fn scalar_support_slope_is_one_quarter() {
        let data = Dataset::from_rows(&[vec![1.0], vec![1.0], vec![1.0]], &[1.0, 2.0, 4.0]).unwrap();
        let pen = PenaltyConfig::lasso(0.5).unwrap();
        let base = lasso::fit(&data, pen).unwrap();
        let q = QueryPoint::new(&base, DVector::from_vec(vec![1.0])).unwrap();
        let (eta, _) = segment_directions(&data, &q, &[0], pen).unwrap();
        assert!((eta[0] - 0.25).abs() < 1e-15);
        // refit slope oracle on the four-point problem
        let h = 1e-3;
        let b1 = HomotopyContext::new(&data, pen).augmented_fit(&q, h, None).unwrap();
        assert!(((b1.beta()[0] - base.beta()[0]) / h - 0.25).abs() < 1e-9);
    }

    #[test]
    fn gamma_vanishes_when_cross_term_cancels() {
        // column 1 is orthogonal to column 0 over the training rows and
        // x_new has no weight on column 1, so γ = 0
        let data = Dataset::from_rows(
            &[vec![1.0, 1.0], vec![1.0, -1.0], vec![2.0, 0.0]],
            &[3.0, 1.0, 4.0],
        )
        .unwrap();
        // Xᵀy = (12, 2): column 0 enters, column 1 stays inactive at λ = 3
        let pen = PenaltyConfig::lasso(3.0).unwrap();
        let base = lasso::fit(&data, pen).unwrap();
        let q = QueryPoint::new(&base, DVector::from_vec(vec![1.5, 0.0])).unwrap();
        assert_eq!(base.active(), &[0]);
        let (_, gamma) = segment_directions(&data, &q, &[0], pen).unwrap();
        assert_eq!(gamma.len(), 1);
        assert!(gamma[0].abs() < 1e-15);
        // numerator check: the dual of column 1 is flat along t on refits
        let ctx = HomotopyContext::new(&data, pen);
        let aug = |t: f64| {
            let f = ctx.augmented_fit(&q, t, None).unwrap();
            let a = data.augmented(q.x_new(), q.y_hat0() + t).unwrap();
            lasso::dual_of(&a, f.beta(), pen).unwrap()[1]
        };
        assert!((aug(0.0) - aug(0.01)).abs() < 1e-9);
    }

    #[test]
    fn breakpoint_conventions() {
        let none = next_breakpoint(
            &SegmentStart {
                t: 0.0,
                direction: Direction::Positive,
                active: &[0],
                beta_active: &[1.0],
                eta: &[0.5],
                inactive: &[1],
                v_inactive: &[0.2],
                gamma: &[0.0],
            },
            1.0,
        );
        assert!(none.t_next.is_infinite());

        let deletion = next_breakpoint(
            &SegmentStart {
                t: 1.0,
                direction: Direction::Positive,
                active: &[3],
                beta_active: &[2.0],
                eta: &[-1.0],
                inactive: &[],
                v_inactive: &[],
                gamma: &[],
            },
            1.0,
        );
        assert_eq!(deletion.t_next, 3.0);
        assert_eq!(deletion.change, Change::Deletion(3));
        assert!(!deletion.tie_detected);

        let addition = next_breakpoint(
            &SegmentStart {
                t: 0.0,
                direction: Direction::Positive,
                active: &[],
                beta_active: &[],
                eta: &[],
                inactive: &[4],
                v_inactive: &[0.5],
                gamma: &[0.25],
            },
            1.0,
        );
        assert_eq!(addition.t_next, 2.0);
        assert_eq!(addition.change, Change::Addition(4));

        // travelling downward flips every slope
        let negative = next_breakpoint(
            &SegmentStart {
                t: 0.0,
                direction: Direction::Negative,
                active: &[],
                beta_active: &[],
                eta: &[],
                inactive: &[4],
                v_inactive: &[0.5],
                gamma: &[0.25],
            },
            1.0,
        );
        assert_eq!(negative.t_next, -6.0);

        let tie = next_breakpoint(
            &SegmentStart {
                t: 0.0,
                direction: Direction::Positive,
                active: &[0],
                beta_active: &[2.0],
                eta: &[-1.0],
                inactive: &[1],
                v_inactive: &[0.5],
                gamma: &[0.25],
            },
            1.0,
        );
        assert!(tie.tie_detected);
    }

    #[test]
    fn addition_breakpoint_matches_refit() {
        // J = {} at the base, the single inactive dual reaches λ at t = 2
        let data = Dataset::from_rows(&[vec![1.0], vec![-1.0]], &[0.25, -0.25]).unwrap();
        let pen = PenaltyConfig::lasso(1.0).unwrap();
        let base = lasso::fit(&data, pen).unwrap();
        assert!(base.active().is_empty());
        assert!((base.dual()[0] - 0.5).abs() < 1e-15);
        let q = QueryPoint::new(&base, DVector::from_vec(vec![0.25])).unwrap();
        let (_, gamma) = segment_directions(&data, &q, &[], pen).unwrap();
        assert_eq!(gamma[0], 0.25);
        let path = trace(&data, &base, &q, 0.0, 4.0).unwrap();
        assert!((path.positive_segments[0].t_end - 2.0).abs() < 1e-12);
        assert_eq!(path.positive_segments[0].change, Change::Addition(0));
        let ctx = HomotopyContext::new(&data, pen);
        assert_eq!(ctx.augmented_fit(&q, 1.99, None).unwrap().beta()[0], 0.0);
        assert!(ctx.augmented_fit(&q, 2.01, None).unwrap().beta()[0] > 0.0);
    }

    #[test]
    fn zero_range_is_the_base_fit() {
        let (data, base) = one_dim();
        let q = QueryPoint::new(&base, DVector::from_vec(vec![1.0])).unwrap();
        let path = trace(&data, &base, &q, 0.0, 0.0).unwrap();
        assert_eq!(path.segments().count(), 1);
        assert_eq!(path.beta_at(0.0).unwrap(), *base.beta());
        assert!(trace(&data, &base, &q, 0.5, 1.0).is_err());
    }

    #[test]
    fn one_dimensional_path() {
        let (data, base) = one_dim();
        assert!((base.beta()[0] - 1.5).abs() < 1e-12);
        let q = QueryPoint::new(&base, DVector::from_vec(vec![1.0])).unwrap();
        assert!((q.y_hat0() - 1.5).abs() < 1e-12);
        let path = trace(&data, &base, &q, -3.0, 3.0).unwrap();
        let first = &path.positive_segments[0];
        assert!((first.eta[0] - 1.0 / 3.0).abs() < 1e-14);
        let ctx = HomotopyContext::new(&data, base.penalty());
        for t in [0.5, 1.0, 2.0, -0.5, -2.5] {
            let cold = ctx.augmented_fit(&q, t, None).unwrap();
            let hot = path.beta_at(t).unwrap();
            assert!((cold.beta() - hot).amax() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn path_matches_refits_on_random_instance() {
        let (data, x_new) = random_problem(42, 20, 8);
        for rho in [0.0, 0.5] {
            let pen = PenaltyConfig::new(0.4, rho).unwrap();
            let base = lasso::fit(&data, pen).unwrap();
            let q = QueryPoint::new(&base, x_new.clone()).unwrap();
            let path = trace(&data, &base, &q, -6.0, 6.0).unwrap();
            let ctx = HomotopyContext::new(&data, pen);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..25 {
                let t = rng.random_range(-6.0..6.0);
                let cold = ctx.augmented_fit(&q, t, None).unwrap();
                let gap = (cold.beta() - path.beta_at(t).unwrap()).amax();
                assert!(gap <= 1e-6, "rho {rho}, t {t}: gap {gap}");
            }
        }
    }

    #[test]
    fn base_on_dual_boundary_triggers_refit() {
        let data = Dataset::from_rows(
            &[vec![1.0, -2.0], vec![0.5, 1.0], vec![-1.0, 0.3]],
            &[2.0, -1.0, 0.5],
        )
        .unwrap();
        let lam = data.x().tr_mul(data.y()).amax();
        let base = lasso::fit(&data, PenaltyConfig::lasso(lam).unwrap()).unwrap();
        assert!(!base.boundary_ties().is_empty());
        let q = QueryPoint::new(&base, DVector::from_vec(vec![0.2, -1.0])).unwrap();
        let path = trace(&data, &base, &q, -3.0, 3.0).unwrap();
        assert!(path.diagnostics.fallback_refits >= 2);
        assert!(path.diagnostics.tie_events >= 2);
        let ctx = HomotopyContext::new(&data, base.penalty());
        for t in [-2.0, -0.3, 0.4, 2.5] {
            let cold = ctx.augmented_fit(&q, t, None).unwrap();
            assert!((cold.beta() - path.beta_at(t).unwrap()).amax() < 1e-6);
        }
    }

    #[test]
    fn online_update_edge_cases() {
        let (data, base) = one_dim();
        let pen = base.penalty();
        let x = DVector::from_vec(vec![1.0]);
        let same = online_update(&data, &base, &x, base.predict(&x), pen).unwrap();
        assert_eq!(same.beta(), base.beta());

        let upd = online_update(&data, &base, &x, 3.0, pen).unwrap();
        let cold_data = Dataset::from_rows(&[vec![1.0], vec![1.0], vec![1.0]], &[1.0, 3.0, 3.0]).unwrap();
        let cold = lasso::fit(&cold_data, pen).unwrap();
        assert!((upd.beta() - cold.beta()).amax() < 1e-10);

        let (data, x_new) = random_problem(3, 15, 5);
        let pen = PenaltyConfig::lasso(0.3).unwrap();
        let base = lasso::fit(&data, pen).unwrap();
        let zero = DVector::zeros(5);
        let _ = x_new;
        let upd = online_update(&data, &base, &zero, 7.5, pen).unwrap();
        assert!((upd.beta() - base.beta()).amax() < 1e-12);
        assert!((upd.dual() - base.dual()).amax() < 1e-10);

        let other = PenaltyConfig::lasso(0.31).unwrap();
        assert!(online_update(&data, &base, &zero, 1.0, other).is_err());
    }

    #[test]
    fn dump_writes_one_line_per_segment() {
        let (data, x_new) = random_problem(8, 20, 6);
        let base = lasso::fit(&data, PenaltyConfig::lasso(0.3).unwrap()).unwrap();
        let q = QueryPoint::new(&base, x_new).unwrap();
        let path = trace(&data, &base, &q, -5.0, 5.0).unwrap();
        let mut buf = Vec::new();
        path.dump_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), path.segments().count());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["t_start", "t_end", "active_size", "change", "direction"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }
}
