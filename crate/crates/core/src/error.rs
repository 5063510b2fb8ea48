use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point {0} lies on the branch cut [0, inf)")]
    BranchCut(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),
    #[error("|z| = {modulus} outside the series disc of radius {radius}")]
    OutOfDisc { modulus: f64, radius: f64 },
    #[error("subordination solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("inversion failed: {0}")]
    Inversion(String),
    #[error("root finding failed: {0}")]
    RootFinding(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of an iterative numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::Inversion(_) | Error::RootFinding(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
