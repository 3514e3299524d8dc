//! Coordinate-descent solver for the Lasso and elastic net, with KKT
//! certification of the returned solution.
//!
//! The objective is the unnormalized
//!
//! ```text
//! ½ Σᵢ (yᵢ − xᵢ′β)² + λ‖β‖₁ + (ρ/2)‖β‖₂²
//! ```
//!
//! with no intercept and no 1/n factor. The dual (subgradient) vector is
//! `v = Xᵀ(y − Xβ) − ρβ`; at the optimum `v_j = sign(β_j)·λ` on the support
//! and `|v_j| ≤ λ` off it.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, PenaltyConfig};
use crate::error::{Error, Result};

/// Relative slack under which an inactive dual coordinate counts as sitting
/// on the boundary `|v_j| = λ`.
pub const DUAL_BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest coordinate change accepted as converged.
    pub update_tol: f64,
    /// Largest KKT violation accepted as converged.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            update_tol: 1e-10,
            kkt_tol: 1e-8,
            max_sweeps: 100_000,
        }
    }
}

/// A KKT-certified solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    beta: DVector<f64>,
    active: Vec<usize>,
    dual: DVector<f64>,
    penalty: PenaltyConfig,
    objective: f64,
    boundary_ties: Vec<usize>,
}

impl LassoFit {
    /// Assembles the fit state for `beta` on `data`. No optimality check is
    /// made here; see [`check_kkt`].
    pub fn from_beta(data: &Dataset, beta: DVector<f64>, penalty: PenaltyConfig) -> Result<Self> {
        let dual = dual_of(data, &beta, penalty)?;
        let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        let lambda = penalty.lambda();
        let slack = DUAL_BOUNDARY_TOL * lambda.max(1.0);
        let boundary_ties = (0..beta.len())
            .filter(|&j| beta[j] == 0.0 && dual[j].abs() >= lambda - slack)
            .collect();
        let objective = objective(data, &beta, penalty);
        Ok(Self {
            beta,
            active,
            dual,
            penalty,
            objective,
            boundary_ties,
        })
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// Support `{j : β_j ≠ 0}` in increasing order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn dual(&self) -> &DVector<f64> {
        &self.dual
    }

    pub fn penalty(&self) -> PenaltyConfig {
        self.penalty
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Inactive coordinates whose dual sits on `±λ` (within
    /// [`DUAL_BOUNDARY_TOL`]). Nonempty means the strict dual slack the
    /// homotopy relies on does not hold at this fit.
    pub fn boundary_ties(&self) -> &[usize] {
        &self.boundary_ties
    }

    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        self.beta.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `max_{j∈J} |v_j − sign(β_j)λ|`.
    pub active_violation: f64,
    /// `max_{j∉J} (|v_j| − λ)₊`.
    pub inactive_excess: f64,
    /// Coordinate attaining the larger of the two violations.
    pub worst_coordinate: Option<usize>,
    pub pass: bool,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.active_violation.max(self.inactive_excess)
    }
}

pub fn objective(data: &Dataset, beta: &DVector<f64>, penalty: PenaltyConfig) -> f64 {
    let r = data.y() - data.x() * beta;
    0.5 * r.norm_squared()
        + penalty.lambda() * beta.lp_norm(1)
        + 0.5 * penalty.rho() * beta.norm_squared()
}

/// Stationarity residual `v = Xᵀ(y − Xβ) − ρβ`.
pub fn dual_of(data: &Dataset, beta: &DVector<f64>, penalty: PenaltyConfig) -> Result<DVector<f64>> {
    if beta.len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: beta.len(),
        });
    }
    let r = data.y() - data.x() * beta;
    Ok(data.x().tr_mul(&r) - beta * penalty.rho())
}

pub fn check_kkt(data: &Dataset, fit: &LassoFit, tol: f64) -> KktReport {
    let dual = match dual_of(data, fit.beta(), fit.penalty()) {
        Ok(v) => v,
        Err(_) => {
            return KktReport {
                active_violation: f64::INFINITY,
                inactive_excess: f64::INFINITY,
                worst_coordinate: None,
                pass: false,
            }
        }
    };
    kkt_from_dual(fit.beta(), &dual, fit.penalty().lambda(), tol)
}

fn kkt_from_dual(beta: &DVector<f64>, dual: &DVector<f64>, lambda: f64, tol: f64) -> KktReport {
    let mut active_violation = 0.0_f64;
    let mut inactive_excess = 0.0_f64;
    let mut worst = (None, 0.0_f64);
    for j in 0..beta.len() {
        let violation = if beta[j] != 0.0 {
            let v = (dual[j] - beta[j].signum() * lambda).abs();
            active_violation = active_violation.max(v);
            v
        } else {
            let v = (dual[j].abs() - lambda).max(0.0);
            inactive_excess = inactive_excess.max(v);
            v
        };
        if violation > worst.1 || (worst.0.is_none() && violation.is_nan()) {
            worst = (Some(j), violation);
        }
    }
    KktReport {
        active_violation,
        inactive_excess,
        worst_coordinate: worst.0,
        pass: active_violation <= tol && inactive_excess <= tol,
    }
}

pub fn fit(data: &Dataset, penalty: PenaltyConfig) -> Result<LassoFit> {
    fit_with(data, penalty, None, &SolverOptions::default())
}

/// Cyclic coordinate descent with active-set passes, optionally warm-started.
///
/// Once the coordinate updates stall, the support and signs are frozen and
/// the active block is solved exactly; the result is accepted only if the
/// signs survive and the full KKT check passes.
pub fn fit_with(
    data: &Dataset,
    penalty: PenaltyConfig,
    warm: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<LassoFit> {
    let (x, y) = (data.x(), data.y());
    let p = data.p();
    let (lambda, rho) = (penalty.lambda(), penalty.rho());

    let mut beta = match warm {
        Some(b) if b.len() == p => b.clone(),
        Some(b) => {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: b.len(),
            })
        }
        None => DVector::zeros(p),
    };
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    let mut resid = y - x * &beta;

    let mut sweeps = 0;
    let mut last_report = None;
    while sweeps < opts.max_sweeps {
        let all: Vec<usize> = (0..p).collect();
        let delta = cd_pass(x, &col_sq, lambda, rho, &all, &mut beta, &mut resid);
        sweeps += 1;

        if delta < opts.update_tol {
            polish_active_block(data, lambda, rho, &mut beta, &mut resid);
            let dual = x.tr_mul(&resid) - &beta * rho;
            let report = kkt_from_dual(&beta, &dual, lambda, opts.kkt_tol);
            if report.pass {
                return LassoFit::from_beta(data, beta, penalty);
            }
            last_report = Some(report);
            continue;
        }

        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        while sweeps < opts.max_sweeps {
            let d = cd_pass(x, &col_sq, lambda, rho, &active, &mut beta, &mut resid);
            sweeps += 1;
            if d < opts.update_tol {
                break;
            }
        }
    }

    let report = last_report.unwrap_or_else(|| {
        let dual = x.tr_mul(&resid) - &beta * rho;
        kkt_from_dual(&beta, &dual, lambda, opts.kkt_tol)
    });
    Err(Error::NonConvergence {
        sweeps,
        coordinate: report.worst_coordinate.unwrap_or(0),
        violation: report.max_violation(),
    })
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// One cyclic pass over `coords`; returns the largest coordinate change.
fn cd_pass(
    x: &DMatrix<f64>,
    col_sq: &[f64],
    lambda: f64,
    rho: f64,
    coords: &[usize],
    beta: &mut DVector<f64>,
    resid: &mut DVector<f64>,
) -> f64 {
    let mut max_delta = 0.0_f64;
    for &j in coords {
        let denom = col_sq[j] + rho;
        if denom == 0.0 {
            // zero column without ridge: coefficient is irrelevant, pin it
            if beta[j] != 0.0 {
                max_delta = max_delta.max(beta[j].abs());
                beta[j] = 0.0;
            }
            continue;
        }
        let col = x.column(j);
        let old = beta[j];
        let z = col.dot(resid) + col_sq[j] * old;
        let new = soft_threshold(z, lambda) / denom;
        let delta = new - old;
        if delta != 0.0 {
            resid.axpy(-delta, &col, 1.0);
            beta[j] = new;
            max_delta = max_delta.max(delta.abs());
        }
    }
    max_delta
}

/// Solves `(X_JᵀX_J + ρI)β_J = X_Jᵀy − λ·s_J` for the current support and
/// signs, keeping the result only if no sign flips.
fn polish_active_block(
    data: &Dataset,
    lambda: f64,
    rho: f64,
    beta: &mut DVector<f64>,
    resid: &mut DVector<f64>,
) {
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() {
        return;
    }
    let x = data.x();
    let xj = x.select_columns(active.iter());
    let mut gram = xj.tr_mul(&xj);
    for d in 0..active.len() {
        gram[(d, d)] += rho;
    }
    let mut rhs = xj.tr_mul(data.y());
    for (d, &j) in active.iter().enumerate() {
        rhs[d] -= lambda * beta[j].signum();
    }
    let Some(chol) = gram.cholesky() else {
        return;
    };
    let sol = chol.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return;
    }
    let signs_kept = active
        .iter()
        .zip(sol.iter())
        .all(|(&j, &b)| b != 0.0 && b.signum() == beta[j].signum());
    if !signs_kept {
        return;
    }
    for (&j, &b) in active.iter().zip(sol.iter()) {
        beta[j] = b;
    }
    *resid = data.y() - x * &*beta;
}
