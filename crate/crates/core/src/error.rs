use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "solver did not converge after {sweeps} sweeps \
         (worst KKT violation {violation:.3e} at coordinate {coordinate})"
    )]
    NonConvergence {
        sweeps: usize,
        coordinate: usize,
        violation: f64,
    },

    #[error("active Gram submatrix of size {size} is singular")]
    SingularGram { size: usize },

    #[error("homotopy exceeded the cap of {cap} segments in one direction")]
    SegmentCap { cap: usize },

    #[error("degenerate split: {train} training and {holdout} holdout points")]
    DegenerateSplit { train: usize, holdout: usize },
}

impl Error {
    /// True for failures caused by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::SingularGram { .. } | Error::SegmentCap { .. }
        )
    }
}
