//! Boundary values of the quasimomentum `k(lambda)` on the real axis.
//!
//! On band `n`, `2 cos k = (-1)^N Delta` with `k` in `[pi (n-1), pi n]`.
//! On the two sides of gap `n`, `Re k = pi n` and
//! `Im k = +/- acosh((-1)^{N-n} Delta / 2)`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::heights::{slit_height, HeightVector};
use crate::model::CoefficientPoint;
use crate::spectrum::{parity, SpectralData};
use crate::transfer::delta_jet;

const EDGE_TOL: f64 = 1e-12;

/// Vertical slits `Gamma_n` of the comb image of the resolvent set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlitDomainData {
    /// `pi n`.
    pub slit_centers: Vec<f64>,
    /// `|h_n|`.
    pub slit_heights: Vec<f64>,
    /// `h_{1n}`, the image of the Dirichlet eigenvalue on the slit.
    pub dirichlet_marks: Vec<f64>,
}

impl SlitDomainData {
    pub fn from_heights(h: &HeightVector) -> Self {
        SlitDomainData {
            slit_centers: (1..=h.gaps()).map(|n| PI * n as f64).collect(),
            slit_heights: h.habs.clone(),
            dirichlet_marks: h.h1.clone(),
        }
    }

    /// Every mark lies on its slit.
    pub fn marks_on_slits(&self, tol: f64) -> bool {
        self.slit_heights.iter().zip(&self.dirichlet_marks).all(|(s, m)| m.abs() <= s + tol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Upper => 1.0,
            Side::Lower => -1.0,
        }
    }
}

fn check_dims(p: &CoefficientPoint, spectral: &SpectralData) -> Result<()> {
    p.check()?;
    if spectral.period() != p.period() {
        return Err(Error::DimensionMismatch { expected: p.period(), found: spectral.period() });
    }
    Ok(())
}

/// Real `k(lambda)` for `lambda` in the spectrum.
pub fn k_on_band(p: &CoefficientPoint, spectral: &SpectralData, lambda: f64) -> Result<f64> {
    check_dims(p, spectral)?;
    if !lambda.is_finite() {
        return Err(Error::NonFinite("lambda"));
    }
    let n_period = p.period();
    let tol = EDGE_TOL * spectral.bound;
    let edges = &spectral.edges;
    if lambda < edges[0] - tol || lambda > edges[2 * n_period - 1] + tol {
        return Err(Error::OutsideSpectrum { lambda });
    }
    let right_edges: Vec<f64> = edges.iter().skip(1).step_by(2).copied().collect();
    let band = 1 + right_edges.partition_point(|&r| r + tol < lambda);
    let (lo, hi) = spectral.band(band);
    if lambda < lo - tol {
        return Err(Error::InGap { n: band - 1, lambda });
    }
    let base = PI * (band - 1) as f64;
    if (lambda - lo).abs() <= tol {
        return Ok(base);
    }
    if (lambda - hi).abs() <= tol {
        return Ok(base + PI);
    }
    let w = parity(n_period - band + 1) * delta_jet(p, lambda, 0)[0] / 2.0;
    Ok(base + w.clamp(-1.0, 1.0).acos())
}

/// `(Re k, Im k)` on one side of the open gap `n`.
pub fn k_on_gap(
    p: &CoefficientPoint,
    spectral: &SpectralData,
    n: usize,
    lambda: f64,
    side: Side,
) -> Result<(f64, f64)> {
    check_dims(p, spectral)?;
    if !lambda.is_finite() {
        return Err(Error::NonFinite("lambda"));
    }
    let n_period = p.period();
    if n == 0 || n >= n_period {
        return Err(Error::InvalidArgument(format!("gap index {n} not in 1..={}", n_period - 1)));
    }
    if spectral.gap_closed[n - 1] {
        return Err(Error::ClosedGap(n));
    }
    let tol = EDGE_TOL * spectral.bound;
    let (lo, hi) = spectral.gap(n);
    if lambda < lo - tol || lambda > hi + tol {
        return Err(Error::OutsideGap { n, lambda, lo, hi });
    }
    let re = PI * n as f64;
    if (lambda - lo).abs() <= tol || (lambda - hi).abs() <= tol {
        return Ok((re, 0.0));
    }
    let m = parity(n_period - n) * delta_jet(p, lambda, 0)[0];
    Ok((re, side.sign() * slit_height(m)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KSample {
    pub lambda: f64,
    pub re: f64,
    pub im: f64,
}

fn linspace(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    (0..count).map(move |i| {
        if count == 1 {
            0.5 * (lo + hi)
        } else if i + 1 == count {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (count - 1) as f64
        }
    })
}

/// `grid` points per band and per open gap (upper side), in increasing
/// `lambda`. Each open gap also gets rows at `lambda_n` and `mu_n`.
pub fn sample(p: &CoefficientPoint, spectral: &SpectralData, grid: usize) -> Result<Vec<KSample>> {
    if grid == 0 {
        return Err(Error::InvalidArgument("grid must be at least 1".into()));
    }
    check_dims(p, spectral)?;
    let n_period = p.period();
    let mut rows = Vec::new();
    for band in 1..=n_period {
        let (lo, hi) = spectral.band(band);
        for lambda in linspace(lo, hi, grid) {
            rows.push(KSample { lambda, re: k_on_band(p, spectral, lambda)?, im: 0.0 });
        }
        if band == n_period || spectral.gap_closed[band - 1] {
            continue;
        }
        let (lo, hi) = spectral.gap(band);
        let mut gap_points: Vec<f64> = linspace(lo, hi, grid).collect();
        gap_points.push(spectral.critical[band - 1]);
        gap_points.push(spectral.dirichlet[band - 1]);
        gap_points.sort_by(f64::total_cmp);
        for lambda in gap_points {
            let (re, im) = k_on_gap(p, spectral, band, lambda, Side::Upper)?;
            rows.push(KSample { lambda, re, im });
        }
    }
    Ok(rows)
}
