//! The height map `h(p) = (h_{1n}, h_{2n})_{n=1..N-1}`.
//!
//! Per gap, with `s_n = N - n`:
//!
//! * `h_{1n} = log((-1)^{s_n} theta_N(mu_n)) = -log((-1)^{s_n} phi_{N+1}(mu_n))`,
//! * `2 cosh|h_n| = (-1)^{s_n} Delta(lambda_n)`,
//! * `h_{2n} = sign(lambda_n - mu_n) sqrt(|h_n|^2 - h_{1n}^2)`.
//!
//! Near a degenerate gap the square root loses half the significant digits.
//! There `h_{2n}` is taken from the equivalent product form
//! `h_{2n} = beta_n (lambda_n - mu_n)`, `beta_n = sqrt(g_n / (2 f_n))`, whose
//! factors are all well conditioned.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CoefficientPoint;
use crate::spectrum::{
    critical_points_unchecked, dirichlet_unchecked, parity, spectral_bound_unchecked, SpectralData,
};
use crate::transfer::{delta_jet, jet_derivative, FundamentalJets};

/// Below this, `acosh(m/2)` is evaluated by its series in `sqrt(m - 2)`.
const ACOSH_SERIES_SWITCH: f64 = 1e-6;
/// `|h_n|^2 - h_{1n}^2` below this (relative to `1 + |h_n|^2`) uses the product form.
const PRODUCT_FORM_SWITCH: f64 = 1e-4;
/// Dead band for `sign(lambda_n - mu_n)`, relative to `B`.
const SIGN_DEAD_BAND: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightVector {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub habs: Vec<f64>,
    /// `|h_n|^2`.
    pub xi: Vec<f64>,
    /// `h_{1n}^2`.
    pub xi1: Vec<f64>,
}

impl HeightVector {
    /// Builds a height vector from its components; `|h_n|` is derived.
    pub fn from_components(h1: Vec<f64>, h2: Vec<f64>) -> Result<Self> {
        if h1.len() != h2.len() {
            return Err(Error::DimensionMismatch { expected: h1.len(), found: h2.len() });
        }
        if h1.iter().chain(&h2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("height vector"));
        }
        let xi1: Vec<f64> = h1.iter().map(|v| v * v).collect();
        let xi: Vec<f64> = xi1.iter().zip(&h2).map(|(a, b)| a + b * b).collect();
        let habs = xi.iter().map(|v| v.sqrt()).collect();
        Ok(HeightVector { h1, h2, habs, xi, xi1 })
    }

    pub fn zeros(n_period: usize) -> Self {
        let m = n_period.saturating_sub(1);
        HeightVector::from_components(vec![0.0; m], vec![0.0; m]).expect("finite")
    }

    /// Splits `(h_{11}..h_{1,N-1}, h_{21}..h_{2,N-1})`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!("height vector length {} is odd", flat.len())));
        }
        let m = flat.len() / 2;
        HeightVector::from_components(flat[..m].to_vec(), flat[m..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.h1.iter().chain(&self.h2).copied().collect()
    }

    pub fn gaps(&self) -> usize {
        self.h1.len()
    }

    /// `h_+ = max_n |h_n|`.
    pub fn h_plus(&self) -> f64 {
        self.habs.iter().copied().fold(0.0, f64::max)
    }
}

/// Intermediate per-gap quantities shared with the Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub struct GapHeight {
    pub n: usize,
    /// `(-1)^{s_n}`.
    pub sign: f64,
    pub lambda: f64,
    pub mu: f64,
    /// `theta_N(mu_n)` and `theta_N'(mu_n)`.
    pub theta_n: [f64; 2],
    /// `theta_{N+1}'(mu_n)`.
    pub theta_n1_d1: f64,
    /// `(-1)^{s_n} Delta(lambda_n)`.
    pub peak: f64,
    /// `Delta''(lambda_n)`.
    pub delta_d2: f64,
    pub h1: f64,
    pub h2: f64,
    pub habs: f64,
    /// `g_n` and `f_n` of the product form, `beta_n = sqrt(g_n / (2 f_n))`.
    pub remainder: f64,
    pub series: f64,
    pub beta: f64,
    pub product_form: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeightDetails {
    pub bound: f64,
    pub critical: Vec<f64>,
    pub dirichlet: Vec<f64>,
    pub gaps: Vec<GapHeight>,
}

impl HeightDetails {
    pub fn heights(&self) -> HeightVector {
        let h1: Vec<f64> = self.gaps.iter().map(|g| g.h1).collect();
        let h2: Vec<f64> = self.gaps.iter().map(|g| g.h2).collect();
        let habs: Vec<f64> = self.gaps.iter().map(|g| g.habs).collect();
        HeightVector {
            xi: habs.iter().map(|v| v * v).collect(),
            xi1: h1.iter().map(|v| v * v).collect(),
            h1,
            h2,
            habs,
        }
    }
}

/// `acosh(m/2)` for `m >= 2`, accurate near `m = 2`.
pub fn slit_height(m: f64) -> f64 {
    let d = m - 2.0;
    if d <= 0.0 {
        return 0.0;
    }
    if d < ACOSH_SERIES_SWITCH {
        // acosh(1 + u) = sqrt(2u) (1 - u/12 + 3u^2/160 - ...)
        let u = 0.5 * d;
        (2.0 * u).sqrt() * (1.0 - u / 12.0 + 3.0 * u * u / 160.0)
    } else {
        let half = 0.5 * m;
        (half + ((half - 1.0) * (half + 1.0)).sqrt()).ln()
    }
}

/// `f(x, y) = 2 sum_{k>=1} (x^k - y^k) / ((x - y) (2k)!)`, so that
/// `cosh sqrt(x) - cosh sqrt(y) = (x - y) f(x, y) / 2`. The divided
/// differences are accumulated as `sum_{j<k} x^j y^{k-1-j}`.
pub fn slit_series(x: f64, y: f64) -> f64 {
    let mut divided = 1.0; // k = 1
    let mut y_pow = 1.0;
    let mut inv_fact = 0.5; // 1/2!
    let mut sum = 0.0;
    for k in 1..500 {
        let term = 2.0 * divided * inv_fact;
        sum += term;
        if term <= 1e-16 * sum {
            break;
        }
        y_pow *= y;
        divided = x * divided + y_pow;
        let kk = (2 * k + 1) as f64;
        inv_fact /= kk * (kk + 1.0);
    }
    sum
}

/// `g_n = (-1)^{s_n+1} (Delta''(lambda_n) + tau int_0^1 (1-t)^2 Delta'''(lambda_n + t tau) dt)`,
/// `tau = mu_n - lambda_n`. The integrand is a polynomial of degree `N - 1` in `t`,
/// integrated exactly by Gauss-Legendre with `ceil(N/2) + 1` nodes.
pub(crate) fn remainder_factor(p: &CoefficientPoint, sign: f64, lambda: f64, mu: f64, delta_d2: f64) -> f64 {
    let n = p.period();
    let tau = mu - lambda;
    let nodes = NonZeroUsize::new(n.div_ceil(2) + 1).expect("positive");
    let rule = GaussLegendre::new(nodes);
    let integral = rule.integrate(0.0, 1.0, |t| {
        let d3 = jet_derivative(&delta_jet(p, lambda + t * tau, 3), 3);
        (1.0 - t) * (1.0 - t) * d3
    });
    -sign * (delta_d2 + tau * integral)
}

pub fn height_details(p: &CoefficientPoint) -> Result<HeightDetails> {
    p.check()?;
    let n = p.period();
    let bound = spectral_bound_unchecked(p);
    let critical = critical_points_unchecked(p, bound)?;
    let dirichlet = dirichlet_unchecked(p, bound)?;
    let peak_tol = 1e-12 * bound.powi(n as i32).max(1.0);

    let mut gaps = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let gap = i + 1;
        let sign = parity(n - gap);
        let (lambda, mu) = (critical[i], dirichlet[i]);

        let at_mu = FundamentalJets::compute(p, mu, 1);
        let theta_n = [at_mu.theta_n[0], at_mu.theta_n[1]];
        // theta_N(mu) phi_{N+1}(mu) = 1; the larger factor carries less cancellation.
        let (norming, h1) = if theta_n[0].abs() >= at_mu.phi_n1[0].abs() {
            let v = sign * theta_n[0];
            (v, v.ln())
        } else {
            let v = sign * at_mu.phi_n1[0];
            (v, -v.ln())
        };
        if !(norming > 0.0) {
            return Err(Error::NormingSign { n: gap, value: norming });
        }

        let at_lambda = delta_jet(p, lambda, 2);
        let peak = sign * at_lambda[0];
        let delta_d2 = 2.0 * at_lambda[2];
        if peak < 2.0 - peak_tol {
            return Err(Error::HeightInconsistent { n: gap, xi: peak - 2.0, xi1: 0.0 });
        }
        let habs_direct = slit_height(peak);
        let xi_direct = habs_direct * habs_direct;
        let xi1 = h1 * h1;
        let diff = xi_direct - xi1;
        if diff < -1e-10 * (1.0 + xi_direct) {
            return Err(Error::HeightInconsistent { n: gap, xi: xi_direct, xi1 });
        }

        let remainder = remainder_factor(p, sign, lambda, mu, delta_d2);
        if !(remainder > 0.0) {
            return Err(Error::NonPositiveRemainder { n: gap, g: remainder });
        }
        let series = slit_series(xi_direct, xi1);
        let beta = (remainder / (2.0 * series)).sqrt();

        let separation = lambda - mu;
        let dead = separation.abs() <= SIGN_DEAD_BAND * bound;
        let product_form = diff <= PRODUCT_FORM_SWITCH * (1.0 + xi_direct);
        let (h2, habs) = if product_form {
            let h2 = if dead { 0.0 } else { beta * separation };
            (h2, (xi1 + h2 * h2).sqrt())
        } else {
            let h2 = if dead { 0.0 } else { diff.max(0.0).sqrt().copysign(separation) };
            (h2, habs_direct)
        };

        gaps.push(GapHeight {
            n: gap,
            sign,
            lambda,
            mu,
            theta_n,
            theta_n1_d1: at_mu.theta_n1[1],
            peak,
            delta_d2,
            h1,
            h2,
            habs,
            remainder,
            series,
            beta,
            product_form,
        });
    }
    Ok(HeightDetails { bound, critical, dirichlet, gaps })
}

pub fn height_map(p: &CoefficientPoint) -> Result<HeightVector> {
    Ok(height_details(p)?.heights())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `(rhs - lhs) / max(|lhs|, |rhs|, 1)`.
    pub slack: f64,
    pub holds: bool,
    pub strict: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub c: f64,
    pub c0: f64,
    pub trace: f64,
    pub h_plus: f64,
    pub edge_norm_sq: f64,
    pub checks: Vec<EstimateCheck>,
}

impl EstimateReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn all_strict(&self) -> bool {
        self.checks.iter().all(|c| c.strict)
    }
}

/// Allowed negative relative slack before an inequality counts as violated.
pub const ESTIMATE_SLACK: f64 = 1e-10;

fn inequality(name: &'static str, lhs: f64, rhs: f64) -> EstimateCheck {
    let slack = (rhs - lhs) / lhs.abs().max(rhs.abs()).max(1.0);
    EstimateCheck { name, lhs, rhs, slack, holds: slack >= -ESTIMATE_SLACK, strict: slack > 0.0 }
}

/// Two-sided a-priori estimates relating the spectrum width `c`, the
/// coefficients and the largest slit height, each with its slack.
pub fn estimate_report(p: &CoefficientPoint, spectral: &SpectralData, h: &HeightVector) -> EstimateReport {
    let n = p.period() as f64;
    let c = spectral.half_width();
    let c0 = spectral.center();
    let trace = p.trace_invariant();
    let h_plus = h.h_plus();
    let e2h = (2.0 * h_plus).exp();
    let eh = h_plus.exp();
    let edge_norm_sq: f64 = spectral.edges.iter().map(|e| e * e).sum();
    let checks = vec![
        inequality("e^{2h+}/4 <= c^2", 0.25 * e2h, c * c),
        inequality("c^2 <= H", c * c, trace),
        inequality("H <= 4Nc^2", trace, 4.0 * n * c * c),
        inequality("4Nc^2 <= 32N e^{2h+}", 4.0 * n * c * c, 32.0 * n * e2h),
        inequality("1 <= c/2", 1.0, 0.5 * c),
        inequality("c/2 <= e^{h+}", 0.5 * c, eh),
        inequality("e^{h+} <= 2c", eh, 2.0 * c),
        inequality("2c^2 <= |edges|^2", 2.0 * c * c, edge_norm_sq),
        inequality("|edges|^2 <= 8Nc^2", edge_norm_sq, 8.0 * n * c * c),
        inequality("|c0| <= c", c0.abs(), c),
    ];
    EstimateReport { c, c0, trace, h_plus, edge_norm_sq, checks }
}
