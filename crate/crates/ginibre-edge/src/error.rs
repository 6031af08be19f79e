use thiserror::Error;

/// Errors reported by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error in {func}: {detail}")]
    Domain {
        func: &'static str,
        detail: String,
    },

    /// A tail method was asked for something it cannot provide.
    #[error("tail method {method} unavailable: {detail}")]
    Method {
        method: &'static str,
        detail: String,
    },

    /// A Monte Carlo estimate is too noisy to be used.
    #[error("Monte Carlo standard error {stderr:.3e} exceeds budget for estimate {estimate:.3e}")]
    StderrBudget { estimate: f64, stderr: f64 },

    /// A determinant came out negative beyond rounding, which means the
    /// truncation or the quadrature is not resolved.
    #[error("determinant {value:.3e} is negative beyond tolerance")]
    NegativeDeterminant { value: f64 },

    /// An iterative routine did not reach its tolerance.
    #[error("{what} did not converge")]
    NoConvergence { what: &'static str },
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    /// True for failures that indicate poor numerical quality rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StderrBudget { .. } | Error::NegativeDeterminant { .. } | Error::NoConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
