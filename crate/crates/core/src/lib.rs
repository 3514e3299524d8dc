//! Exact conformal prediction sets for the Lasso and elastic net.
//!
//! The conformal set at a new covariate is computed without a grid search by
//! following the piecewise-linear path of the Lasso solution as the response
//! of the appended point varies ([`homotopy`]), then reading off, segment by
//! segment, where the appended residual's rank crosses the conformal
//! threshold ([`conformal`]).
//!
//! All penalties use the unnormalized loss `½Σ(yᵢ − xᵢ′β)²`, without an
//! intercept; see [`PenaltyConfig`].

pub mod conformal;
pub mod data;
pub mod error;
pub mod homotopy;
pub mod lasso;
pub mod linalg;
pub mod parallel;
pub mod simdata;
pub mod tuning;

pub use data::{Dataset, PenaltyConfig};
pub use error::{Error, Result};
pub use homotopy::{HomotopyPath, HomotopySegment, QueryPoint};
pub use lasso::LassoFit;
pub use parallel::Parallelism;
