//! Coefficient space of N-periodic Jacobi matrices.
//!
//! A point is the pair `(x, b)` of zero-sum N-vectors, where `a_k = exp(x_k)`
//! are the off-diagonal entries and `b_k` the diagonal entries. The zero sum
//! of `x` normalises `a_1 ... a_N = 1`. The reduced chart drops the last
//! coordinate of each half, identifying the space with `R^{2N-2}`.

use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero-sum tolerance per unit of period on input points.
pub const ZERO_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPoint {
    n: usize,
    x: Vec<f64>,
    b: Vec<f64>,
}

/// Free coordinates `(u, v) = (x_1..x_{N-1}, b_1..b_{N-1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedPoint {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    PeriodTooSmall(usize),
    Length { field: &'static str, expected: usize, found: usize },
    NonFinite { field: &'static str, index: usize },
    XSum { residual: f64 },
    BSum { residual: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PeriodTooSmall(n) => write!(f, "period N = {n} < 2"),
            Violation::Length { field, expected, found } => {
                write!(f, "{field} has length {found}, expected {expected}")
            }
            Violation::NonFinite { field, index } => write!(f, "{field}[{index}] is not finite"),
            Violation::XSum { residual } => write!(f, "sum of x = {residual:e} (must be 0)"),
            Violation::BSum { residual } => write!(f, "sum of b = {residual:e} (must be 0)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl CoefficientPoint {
    /// Builds a point and checks it against the zero-sum constraints.
    pub fn new(x: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let p = CoefficientPoint { n: x.len(), x, b };
        p.validate().map_err(Error::InvalidPoint)?;
        Ok(p)
    }

    /// Builds a point without checking. Use [`CoefficientPoint::validate`] before
    /// handing it to the numerical routines.
    pub fn new_unchecked(x: Vec<f64>, b: Vec<f64>) -> Self {
        CoefficientPoint { n: x.len(), x, b }
    }

    /// The free Jacobi matrix `a = 1, b = 0`.
    pub fn zero(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("period N = {n} must be at least 2")));
        }
        Ok(CoefficientPoint { n, x: vec![0.0; n], b: vec![0.0; n] })
    }

    pub fn period(&self) -> usize {
        self.n
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Off-diagonal entries `a_k = exp(x_k)`, `k = 1..N` (0-based storage).
    pub fn a(&self) -> Vec<f64> {
        self.x.iter().map(|x| x.exp()).collect()
    }

    /// `H = sum b_k^2 + 2 sum a_k^2`.
    pub fn trace_invariant(&self) -> f64 {
        self.b.iter().map(|b| b * b).sum::<f64>() + 2.0 * self.a().iter().map(|a| a * a).sum::<f64>()
    }

    /// Maximum absolute coordinate.
    pub fn sup_norm(&self) -> f64 {
        self.x.iter().chain(&self.b).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn validate(&self) -> std::result::Result<(), ValidationReport> {
        let mut report = ValidationReport::default();
        let n = self.n;
        if n < 2 {
            report.violations.push(Violation::PeriodTooSmall(n));
        }
        if self.x.len() != n {
            report.violations.push(Violation::Length { field: "x", expected: n, found: self.x.len() });
        }
        if self.b.len() != n {
            report.violations.push(Violation::Length { field: "b", expected: n, found: self.b.len() });
        }
        for (field, values) in [("x", &self.x), ("b", &self.b)] {
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                report.violations.push(Violation::NonFinite { field, index });
            }
        }
        if report.is_ok() {
            let tol = ZERO_SUM_TOL * n as f64;
            let sx: f64 = self.x.iter().sum();
            let sb: f64 = self.b.iter().sum();
            if sx.abs() > tol {
                report.violations.push(Violation::XSum { residual: sx });
            }
            if sb.abs() > tol {
                report.violations.push(Violation::BSum { residual: sb });
            }
        }
        if report.is_ok() {
            Ok(())
        } else {
            Err(report)
        }
    }

    pub fn check(&self) -> Result<()> {
        self.validate().map_err(Error::InvalidPoint)
    }

    pub fn reduce(&self) -> Result<ReducedPoint> {
        self.check()?;
        let m = self.n - 1;
        Ok(ReducedPoint { u: self.x[..m].to_vec(), v: self.b[..m].to_vec() })
    }

    /// Reduced coordinates flattened as `(u_1..u_{N-1}, v_1..v_{N-1})`.
    pub fn reduced_vec(&self) -> Result<Vec<f64>> {
        let r = self.reduce()?;
        Ok(r.u.into_iter().chain(r.v).collect())
    }
}

impl ReducedPoint {
    pub fn zeros(n_period: usize) -> Self {
        let m = n_period.saturating_sub(1);
        ReducedPoint { u: vec![0.0; m], v: vec![0.0; m] }
    }

    /// Splits a flat `(u, v)` vector of even length.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "reduced vector length {} is odd",
                flat.len()
            )));
        }
        let m = flat.len() / 2;
        Ok(ReducedPoint { u: flat[..m].to_vec(), v: flat[m..].to_vec() })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.u.iter().chain(&self.v).copied().collect()
    }

    /// Completes each half with its negated sum so the zero-sum constraints hold.
    pub fn embed(&self, n_period: usize) -> Result<CoefficientPoint> {
        if n_period < 2 {
            return Err(Error::InvalidArgument(format!("period N = {n_period} must be at least 2")));
        }
        let m = n_period - 1;
        if self.u.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: self.u.len() });
        }
        if self.v.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: self.v.len() });
        }
        if self.u.iter().chain(&self.v).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reduced point"));
        }
        let complete = |free: &[f64]| {
            let mut full = free.to_vec();
            full.push(-free.iter().sum::<f64>());
            full
        };
        Ok(CoefficientPoint { n: n_period, x: complete(&self.u), b: complete(&self.v) })
    }
}

/// Deterministic random point: entries uniform in `[-scale, scale]`, then each
/// half is shifted to zero mean and its last entry recomputed from the others.
pub fn random_point(n_period: usize, scale: f64, seed: u64) -> Result<CoefficientPoint> {
    if n_period < 2 {
        return Err(Error::InvalidArgument(format!("period N = {n_period} must be at least 2")));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale {scale} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..len).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let mean = raw.iter().sum::<f64>() / len as f64;
        raw.into_iter().map(|v| v - mean).collect()
    };
    let x = draw(n_period);
    let b = draw(n_period);
    let m = n_period - 1;
    ReducedPoint { u: x[..m].to_vec(), v: b[..m].to_vec() }.embed(n_period)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_examples() {
        assert!(CoefficientPoint::new_unchecked(vec![0.0, 0.0], vec![0.0, 0.0]).validate().is_ok());
        assert!(CoefficientPoint::new_unchecked(vec![0.3, -0.3], vec![0.5, -0.5]).validate().is_ok());
        let err = CoefficientPoint::new_unchecked(vec![1.0, 1.0, 1.0], vec![0.0; 3])
            .validate()
            .unwrap_err();
        assert_eq!(err.violations, vec![Violation::XSum { residual: 3.0 }]);
    }

    #[test]
    fn validate_reports_non_finite_and_length() {
        let p = CoefficientPoint::new_unchecked(vec![f64::NAN, 0.0], vec![0.0, 0.0]);
        assert!(matches!(
            p.validate().unwrap_err().violations[0],
            Violation::NonFinite { field: "x", index: 0 }
        ));
        let p = CoefficientPoint::new_unchecked(vec![0.0, 0.0], vec![0.0]);
        assert!(p.validate().is_err());
        assert!(CoefficientPoint::new_unchecked(vec![0.0], vec![0.0]).validate().is_err());
    }

    #[test]
    fn reduce_examples() {
        let p = CoefficientPoint::new(vec![0.3, -0.3], vec![0.5, -0.5]).unwrap();
        assert_eq!(p.reduce().unwrap(), ReducedPoint { u: vec![0.3], v: vec![0.5] });
        let p = CoefficientPoint::new(vec![1.0, -2.0, 1.0], vec![0.0; 3]).unwrap();
        assert_eq!(p.reduce().unwrap(), ReducedPoint { u: vec![1.0, -2.0], v: vec![0.0, 0.0] });
        let p = CoefficientPoint::zero(4).unwrap();
        assert_eq!(p.reduce().unwrap(), ReducedPoint::zeros(4));
    }

    #[test]
    fn embed_examples() {
        let r = ReducedPoint { u: vec![0.7], v: vec![-0.2] };
        let p = r.embed(2).unwrap();
        assert_eq!(p.x(), &[0.7, -0.7]);
        assert_eq!(p.b(), &[-0.2, 0.2]);
        assert_eq!(ReducedPoint::zeros(5).embed(5).unwrap(), CoefficientPoint::zero(5).unwrap());
        assert!(matches!(
            r.embed(3),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn random_point_contract() {
        let p = random_point(4, 0.0, 3).unwrap();
        assert_eq!(p, CoefficientPoint::zero(4).unwrap());
        assert_eq!(random_point(6, 0.8, 11).unwrap(), random_point(6, 0.8, 11).unwrap());
        assert_ne!(random_point(6, 0.8, 11).unwrap(), random_point(6, 0.8, 12).unwrap());
        assert!(random_point(4, 1.0, 7).unwrap().validate().is_ok());
        assert!(random_point(1, 1.0, 7).is_err());
        assert!(random_point(3, -1.0, 7).is_err());
    }

    #[test]
    fn trace_invariant_at_origin() {
        assert_eq!(CoefficientPoint::zero(5).unwrap().trace_invariant(), 10.0);
    }
}
