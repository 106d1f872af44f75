//! Invariant checks on a single coefficient point, each reported with its
//! residual and tolerance.

use serde::Serialize;

use crate::error::Result;
use crate::heights::{estimate_report, height_details, HeightDetails, HeightVector};
use crate::jacobian::{fd_jacobian, gap_gradients, grad_heights};
use crate::model::CoefficientPoint;
use crate::spectrum::{parity, SpectralData};
use crate::transfer::{delta_jet, evaluate, fundamental_solutions, FundamentalJets};

pub const WRONSKIAN_TOL: f64 = 1e-12;
pub const PRODUCT_TOL: f64 = 1e-8;
pub const TRACE_TOL: f64 = 1e-8;
pub const EDGE_SUM_TOL: f64 = 1e-9;
pub const DIRICHLET_TOL: f64 = 1e-9;
pub const INTERLACING_TOL: f64 = 1e-8;
pub const HEIGHT_TOL: f64 = 1e-10;
pub const JACOBIAN_TOL: f64 = 1e-6;
pub const JACOBIAN_SWITCH_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Check { name: name.into(), residual, tolerance, pass: residual <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub pass: bool,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckOptions {
    /// Added to `lambda_1^-` before the product identity is evaluated.
    pub edge_error: f64,
    /// Skip the finite-difference Jacobian comparison.
    pub skip_jacobian: bool,
}

/// Deterministic probe points spread over `[-B, B]`.
pub fn probe_points(bound: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| bound * (std::f64::consts::PI * (j as f64 + 0.37) / count as f64).cos())
        .collect()
}

/// First-order rounding bound, in units of machine epsilon, for the
/// computed Wronskian `theta_N phi_{N+1} - theta_{N+1} phi_N`. The discrete
/// Wronskian `a_k (theta_k phi_{k+1} - theta_{k+1} phi_k)` is invariant, so
/// the rounding of each step enters once and is carried to the end unchanged.
pub fn wronskian_error_scale(p: &CoefficientPoint, lambda: f64) -> f64 {
    let n = p.period();
    let a = p.a();
    let b = p.b();
    let (theta, phi) = fundamental_solutions(p, lambda);
    let local = |y: &[f64], i: usize| {
        let a_prev = if i == 0 { a[n - 1] } else { a[i - 1] };
        ((lambda - b[i]).abs() * y[i + 1].abs() + a_prev * y[i].abs()) / a[i]
    };
    let steps: f64 = (0..n)
        .map(|i| {
            let k = i + 1;
            a[i] / a[n - 1] * (theta[k].abs() * local(&phi, i) + local(&theta, i) * phi[k].abs())
        })
        .sum();
    let last = (theta[n] * phi[n + 1]).abs() + (theta[n + 1] * phi[n]).abs();
    1.0 + steps + last
}

/// `max |theta_N phi_{N+1} - theta_{N+1} phi_N - 1|` divided by
/// [`wronskian_error_scale`].
pub fn wronskian_residual(p: &CoefficientPoint, lambdas: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &lambda in lambdas {
        let f = evaluate(p, lambda, 0)?;
        worst = worst.max((f.wronskian() - 1.0).abs() / wronskian_error_scale(p, lambda));
    }
    Ok(worst)
}

/// `max |prod (lambda - edge) - (Delta^2 - 4)| / max(Delta^2, 4)`.
pub fn product_residual(p: &CoefficientPoint, edges: &[f64], lambdas: &[f64]) -> f64 {
    lambdas
        .iter()
        .map(|&lambda| {
            let d = delta_jet(p, lambda, 0)[0];
            let product: f64 = edges.iter().map(|e| lambda - e).product();
            (product - (d * d - 4.0)).abs() / (d * d).max(4.0)
        })
        .fold(0.0, f64::max)
}

/// `|sum edge^2 - 2H| / 2H`.
pub fn trace_residual(p: &CoefficientPoint, spectral: &SpectralData) -> f64 {
    let two_h = 2.0 * p.trace_invariant();
    let norm_sq: f64 = spectral.edges.iter().map(|e| e * e).sum();
    (norm_sq - two_h).abs() / two_h
}

/// `|sum edges| / B`.
pub fn edge_sum_residual(spectral: &SpectralData) -> f64 {
    spectral.edges.iter().sum::<f64>().abs() / spectral.bound
}

/// Largest amount by which edges, critical points or Dirichlet eigenvalues
/// leave their prescribed order, relative to `B`.
pub fn interlacing_residual(spectral: &SpectralData) -> f64 {
    let mut worst: f64 = 0.0;
    for w in spectral.edges.windows(2) {
        worst = worst.max(w[0] - w[1]);
    }
    for n in 1..spectral.period() {
        let (lo, hi) = spectral.gap(n);
        for v in [spectral.critical[n - 1], spectral.dirichlet_raw[n - 1]] {
            worst = worst.max(lo - v).max(v - hi);
        }
    }
    worst.max(0.0) / spectral.bound
}

/// Residuals of `phi_{N+1}(mu_n) theta_N(mu_n) = 1` and
/// `(-1)^{N-n} Delta(mu_n) = 2 cosh h_{1n}` (relative), maximised over gaps.
pub fn dirichlet_identity_residuals(p: &CoefficientPoint, details: &HeightDetails) -> (f64, f64) {
    let n = p.period();
    let mut norming: f64 = 0.0;
    let mut cosh: f64 = 0.0;
    for g in &details.gaps {
        let jets = FundamentalJets::compute(p, g.mu, 0);
        norming = norming.max((jets.phi_n1[0] * jets.theta_n[0] - 1.0).abs());
        let lhs = parity(n - g.n) * (jets.phi_n1[0] + jets.theta_n[0]);
        let rhs = 2.0 * g.h1.cosh();
        cosh = cosh.max((lhs - rhs).abs() / rhs);
    }
    (norming, cosh)
}

/// `max |habs^2 - h1^2 - h2^2| / (1 + habs^2)` and `max (|h1| - habs)`.
pub fn height_residual(h: &HeightVector) -> f64 {
    (0..h.gaps())
        .map(|i| {
            let split = (h.habs[i].powi(2) - h.h1[i].powi(2) - h.h2[i].powi(2)).abs() / (1.0 + h.xi[i]);
            split.max(h.h1[i].abs() - h.habs[i])
        })
        .fold(0.0, f64::max)
}

/// Analytic versus central-difference Jacobian, relative to the largest
/// entry, together with the tolerance that applies (looser when some
/// `h_{2n}` sits near the branch switch).
pub fn jacobian_residual(p: &CoefficientPoint) -> Result<(f64, f64)> {
    let analytic = grad_heights(p)?.matrix;
    let fd = fd_jacobian(p, FD_STEP)?;
    let scale = fd.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let residual = (&analytic - &fd).amax() / scale;
    let near_switch = gap_gradients(p)?.iter().any(|g| g.in_overlap());
    Ok((residual, if near_switch { JACOBIAN_SWITCH_TOL } else { JACOBIAN_TOL }))
}

pub fn run_checks(p: &CoefficientPoint, opts: &CheckOptions) -> Result<CheckReport> {
    let spectral = SpectralData::compute(p)?;
    let details = height_details(p)?;
    let heights = details.heights();
    let mut checks = Vec::new();

    let mut probes = probe_points(spectral.bound, 10);
    probes.extend(spectral.edges.iter().chain(&spectral.critical).chain(&spectral.dirichlet_raw));
    checks.push(Check::new("wronskian", wronskian_residual(p, &probes)?, WRONSKIAN_TOL));
    checks.push(Check::new("interlacing", interlacing_residual(&spectral), INTERLACING_TOL));

    let mut edges = spectral.edges.clone();
    edges[1] += opts.edge_error;
    checks.push(Check::new(
        "edge product = Delta^2 - 4",
        product_residual(p, &edges, &probe_points(spectral.bound, 10)),
        PRODUCT_TOL,
    ));
    checks.push(Check::new("trace identity 2H = |edges|^2", trace_residual(p, &spectral), TRACE_TOL));
    checks.push(Check::new("sum of edges = 0", edge_sum_residual(&spectral), EDGE_SUM_TOL));

    let (norming, cosh) = dirichlet_identity_residuals(p, &details);
    checks.push(Check::new("phi_{N+1}(mu) theta_N(mu) = 1", norming, DIRICHLET_TOL));
    checks.push(Check::new("signed Delta(mu) = 2 cosh h1", cosh, DIRICHLET_TOL));
    checks.push(Check::new("|h|^2 = h1^2 + h2^2", height_residual(&heights), HEIGHT_TOL));

    let report = estimate_report(p, &spectral, &heights);
    for c in &report.checks {
        checks.push(Check::new(format!("estimate {}", c.name), (-c.slack).max(0.0), crate::heights::ESTIMATE_SLACK));
    }

    if !opts.skip_jacobian {
        let (residual, tol) = jacobian_residual(p)?;
        checks.push(Check::new("jacobian vs finite differences", residual, tol));
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(CheckReport { pass, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_point;

    #[test]
    fn origin_passes_everything() {
        for n in 2..=6 {
            let report = run_checks(&CoefficientPoint::zero(n).unwrap(), &CheckOptions::default()).unwrap();
            assert!(report.pass, "{:#?}", report.checks);
        }
    }

    #[test]
    fn identities_hold_on_random_points() {
        for n in 2..=8 {
            let p = random_point(n, 0.8, 5 + n as u64).unwrap();
            let report = run_checks(&p, &CheckOptions::default()).unwrap();
            for c in report.checks.iter().filter(|c| !c.name.starts_with("estimate")) {
                assert!(c.pass, "N={n}: {c:?}");
            }
        }
    }

    #[test]
    fn injected_edge_error_is_caught() {
        let p = random_point(4, 0.5, 2).unwrap();
        let opts = CheckOptions { edge_error: 1e-3, skip_jacobian: true };
        let report = run_checks(&p, &opts).unwrap();
        assert!(!report.pass);
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        assert_eq!(failed, vec!["edge product = Delta^2 - 4"]);
    }

    #[test]
    fn probes_stay_inside_bound() {
        let pts = probe_points(3.0, 10);
        assert_eq!(pts.len(), 10);
        assert!(pts.iter().all(|x| x.abs() < 3.0));
    }
}
