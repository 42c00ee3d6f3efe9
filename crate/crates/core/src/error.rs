use crate::market::ModelProfile;

/// Library-wide error type.
///
/// Variants split into two families that the CLI maps onto exit codes:
/// validation errors (bad inputs, bad config) and numerical failures
/// (non-convergence, overflow, degenerate orbits).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{context}: matrix is not symmetric (max deviation {max_dev:e})")]
    NotSymmetric {
        context: &'static str,
        max_dev: f64,
    },

    #[error("{context}: matrix is not positive definite")]
    NotPositiveDefinite { context: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {context}{}", fmt_step(*step))]
    NonFinite {
        context: &'static str,
        step: Option<usize>,
    },

    #[error("solver did not converge within {iters} iterations (residual {residual:e})")]
    NonConvergence {
        iters: usize,
        residual: f64,
        last_iterate: Box<ModelProfile>,
    },

    #[error("simplex drift at step {step}: row sum off by {deviation:e} (reduce the step size)")]
    SimplexDrift { step: usize, deviation: f64 },

    #[error("degenerate orbit: reached the interval boundary at iterate {iterate}")]
    DegenerateOrbit { iterate: usize },

    #[error("sampling requires a zero cross moment c; got max |c_k| = {max_abs:e}")]
    NonZeroCrossMoment { max_abs: f64 },

    #[error("no certified influence level up to {l_max}; raise the upper search bound")]
    NoCertifiedInfluence { l_max: f64 },

    #[error("numerical failure in {context}: {detail}")]
    Numerical {
        context: &'static str,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_step(step: Option<usize>) -> String {
    match step {
        Some(s) => format!(" at step {s}"),
        None => String::new(),
    }
}

impl Error {
    /// True for input/config problems; false for numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::NotSymmetric { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::InvalidParameter { .. }
                | Error::NonZeroCrossMoment { .. }
                | Error::Config(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
