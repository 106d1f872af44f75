use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid coefficient point: {0}")]
    InvalidPoint(ValidationReport),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Two zeros of a discriminant derivative could not be separated.
    #[error("derivative cascade failed at order {order}: no sign change on [{lo}, {hi}]")]
    Resolution { order: usize, lo: f64, hi: f64 },

    #[error("band {band}: signed discriminant is not monotone across [{lo}, {hi}]")]
    Monotonicity { band: usize, lo: f64, hi: f64 },

    #[error("Sturm count mismatch: expected {expected} eigenvalues, counted {found}")]
    SturmCount { expected: usize, found: usize },

    #[error("Dirichlet eigenvalue {n} = {mu} lies outside its gap [{lo}, {hi}]")]
    DirichletOutsideGap { n: usize, mu: f64, lo: f64, hi: f64 },

    #[error("gap {n}: signed theta_N at the Dirichlet eigenvalue is not positive ({value})")]
    NormingSign { n: usize, value: f64 },

    #[error("gap {n}: |h_n|^2 = {xi} is smaller than h_1n^2 = {xi1}")]
    HeightInconsistent { n: usize, xi: f64, xi1: f64 },

    #[error("gap {n}: {what} has a degenerate zero (derivative {derivative})")]
    DegenerateZero { n: usize, what: &'static str, derivative: f64 },

    #[error("gap {n}: remainder factor g_n = {g} is not positive")]
    NonPositiveRemainder { n: usize, g: f64 },

    #[error("lambda = {lambda} lies outside the spectrum")]
    OutsideSpectrum { lambda: f64 },

    #[error("lambda = {lambda} lies in the open gap {n}")]
    InGap { n: usize, lambda: f64 },

    #[error("gap {0} is closed")]
    ClosedGap(usize),

    #[error("lambda = {lambda} is outside gap {n} = [{lo}, {hi}]")]
    OutsideGap { n: usize, lambda: f64, lo: f64, hi: f64 },

    #[error("continuation stalled at t = {t} (step fell below minimum)")]
    Stall { t: f64, x: Vec<f64>, b: Vec<f64> },

    #[error("Jacobian solve failed at gap {gap} (pivot ratio {pivot_ratio:e})")]
    SingularJacobian { gap: usize, pivot_ratio: f64, x: Vec<f64>, b: Vec<f64> },
}

impl Error {
    /// Domain errors are caused by bad input; everything else is a numerical failure.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::InvalidPoint(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::NonFinite(_)
                | Error::OutsideSpectrum { .. }
                | Error::InGap { .. }
                | Error::ClosedGap(_)
                | Error::OutsideGap { .. }
        )
    }
}
