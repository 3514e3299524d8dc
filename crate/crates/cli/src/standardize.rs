use conflasso::Dataset;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

/// Column centring and scaling of X and centring of y, fitted on the
/// training data. Prediction intervals computed on the transformed problem
/// map back by adding `y_mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub x_mean: DVector<f64>,
    pub x_scale: DVector<f64>,
    pub y_mean: f64,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> CliResult<Self> {
        let n = data.n() as f64;
        let x = data.x();
        let x_mean = DVector::from_fn(data.p(), |j, _| x.column(j).sum() / n);
        let x_scale = DVector::from_fn(data.p(), |j, _| {
            let m = x_mean[j];
            (x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        });
        if let Some(j) = x_scale.iter().position(|&s| !(s > 0.0)) {
            return Err(CliError::input(format!(
                "column {} is constant and cannot be standardized",
                j + 1
            )));
        }
        Ok(Self {
            x_mean,
            x_scale,
            y_mean: data.y().sum() / n,
        })
    }

    pub fn transform(&self, data: &Dataset) -> CliResult<Dataset> {
        let x = DMatrix::from_fn(data.n(), data.p(), |i, j| {
            (data.x()[(i, j)] - self.x_mean[j]) / self.x_scale[j]
        });
        let y = data.y().add_scalar(-self.y_mean);
        Ok(Dataset::new(x, y)?)
    }

    pub fn transform_query(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |j, _| (x[j] - self.x_mean[j]) / self.x_scale[j])
    }

    /// Coefficients and intercept on the original scale.
    pub fn original_coefficients(&self, beta: &DVector<f64>) -> (DVector<f64>, f64) {
        let b = beta.component_div(&self.x_scale);
        let intercept = self.y_mean - b.dot(&self.x_mean);
        (b, intercept)
    }
}
