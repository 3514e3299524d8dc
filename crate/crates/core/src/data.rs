//! Training data and penalty configuration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Design matrix (n × p) paired with a response vector of length n.
///
/// Row `i` of `x` pairs with `y[i]`. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset must have n >= 1 and p >= 1, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            let (i, j) = (k % x.nrows(), k / x.nrows());
            return Err(Error::InvalidInput(format!(
                "non-finite design entry at row {i}, column {j}"
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite response at row {i}")));
        }
        Ok(Self { x, y })
    }

    /// Builds a dataset from row-major covariates.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(x, DVector::from_column_slice(y))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// The dataset with `(x_new, y_new)` appended as row n+1.
    pub fn augmented(&self, x_new: &DVector<f64>, y_new: f64) -> Result<Self> {
        self.check_covariate(x_new)?;
        let (n, p) = (self.n(), self.p());
        let x = DMatrix::from_fn(n + 1, p, |i, j| if i < n { self.x[(i, j)] } else { x_new[j] });
        let y = DVector::from_fn(n + 1, |i, _| if i < n { self.y[i] } else { y_new });
        Self::new(x, y)
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let x = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_fn(idx.len(), |i, _| self.y[idx[i]]);
        Self::new(x, y)
    }

    pub(crate) fn check_covariate(&self, x_new: &DVector<f64>) -> Result<()> {
        if x_new.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: x_new.len(),
            });
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite query covariate".into()));
        }
        Ok(())
    }
}

/// ℓ₁ weight `lambda` and ℓ₂ weight `rho` of the penalty
/// `lambda·‖β‖₁ + (rho/2)·‖β‖₂²`.
///
/// The loss these weights pair with is the *unnormalized* `½Σ(yᵢ − xᵢ′β)²`.
/// Packages that scale the loss by 1/n (or 1/2n) use a lambda that is n times
/// smaller for the same fit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PenaltyConfig {
    lambda: f64,
    rho: f64,
}

impl PenaltyConfig {
    pub fn new(lambda: f64, rho: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and strictly positive, got {lambda}"
            )));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "rho must be finite and non-negative, got {rho}"
            )));
        }
        Ok(Self { lambda, rho })
    }

    pub fn lasso(lambda: f64) -> Result<Self> {
        Self::new(lambda, 0.0)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Same penalty with both weights multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.lambda * factor, self.rho * factor)
    }
}
