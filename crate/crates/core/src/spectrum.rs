//! Band edges, critical points and Dirichlet eigenvalues.
//!
//! Every root here is real and bracketed: the critical points come from a
//! derivative cascade (the zeros of each derivative of the discriminant
//! separate the zeros of the next lower one), band edges are the unique
//! crossings of `+-2` between consecutive critical points, and the Dirichlet
//! eigenvalues are the spectrum of the truncated tridiagonal matrix obtained
//! from `y_1 = y_{N+1} = 0`.

use crate::error::{Error, Result};
use crate::model::CoefficientPoint;
use crate::transfer::{delta_jet, FundamentalJets};

/// Relative and absolute padding of the Gershgorin bound used for brackets.
const BRACKET_PAD_REL: f64 = 1e-9;
const BRACKET_PAD_ABS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumOptions {
    /// A gap is closed when `(-1)^{N-n} Delta(lambda_n) - 2 <= factor * B^N`.
    pub closed_gap_factor: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { closed_gap_factor: 1e-11 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    /// `(lambda_0^+, lambda_1^-, lambda_1^+, ..., lambda_N^-)`.
    pub edges: Vec<f64>,
    /// Zeros `lambda_n` of `Delta'`.
    pub critical: Vec<f64>,
    /// Dirichlet eigenvalues clamped into their gaps (`mu_n = lambda_n` for closed gaps).
    pub dirichlet: Vec<f64>,
    /// Dirichlet eigenvalues as found, before clamping.
    pub dirichlet_raw: Vec<f64>,
    pub gap_closed: Vec<bool>,
    /// Gershgorin bound `B`.
    pub bound: f64,
}

/// `(-1)^k`.
pub(crate) fn parity(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `B = max_n (|b_n| + a_{n-1} + a_n)` with `a_0 = a_N`.
pub fn spectral_bound(p: &CoefficientPoint) -> Result<f64> {
    p.check()?;
    Ok(spectral_bound_unchecked(p))
}

pub(crate) fn spectral_bound_unchecked(p: &CoefficientPoint) -> f64 {
    let n = p.period();
    let a = p.a();
    (0..n)
        .map(|i| p.b()[i].abs() + a[(i + n - 1) % n] + a[i])
        .fold(0.0, f64::max)
}

fn bracket_bound(bound: f64) -> f64 {
    bound * (1.0 + BRACKET_PAD_REL) + BRACKET_PAD_ABS
}

/// Bisection for a sign change of `f` on `[lo, hi]`, run to machine resolution.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    if f_lo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Zeros of `Delta'`, strictly increasing.
pub fn critical_points(p: &CoefficientPoint) -> Result<Vec<f64>> {
    p.check()?;
    critical_points_unchecked(p, spectral_bound_unchecked(p))
}

pub(crate) fn critical_points_unchecked(p: &CoefficientPoint, bound: f64) -> Result<Vec<f64>> {
    let n = p.period();
    let pad = bracket_bound(bound);

    // Delta^{(N-1)} is linear: (N-1)! (c_{N-1} + N c_N lambda).
    let top = delta_jet(p, 0.0, n);
    let mut roots = vec![-top[n - 1] / (n as f64 * top[n])];
    let mut brackets = vec![(-pad, pad)];

    for order in (1..n - 1).rev() {
        let f = |lam: f64| delta_jet(p, lam, order)[order];
        let ends: Vec<f64> = std::iter::once(-pad)
            .chain(roots.iter().copied())
            .chain(std::iter::once(pad))
            .collect();
        let mut next = Vec::with_capacity(ends.len() - 1);
        brackets.clear();
        for w in ends.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (f_lo, f_hi) = (f(lo), f(hi));
            if f_lo * f_hi > 0.0 || !(lo < hi) {
                return Err(Error::Resolution { order, lo, hi });
            }
            next.push(bisect(f, lo, hi));
            brackets.push((lo, hi));
        }
        roots = next;
    }

    // Newton polish on Delta' using Delta''.
    let tol = 1e-12 * n as f64 * bound.powi(n as i32 - 1);
    for (root, &(lo, hi)) in roots.iter_mut().zip(&brackets) {
        let mut jet = delta_jet(p, *root, 2);
        for _ in 0..4 {
            if jet[1].abs() <= tol || jet[2] == 0.0 {
                break;
            }
            let candidate = *root - jet[1] / (2.0 * jet[2]);
            if !(candidate > lo && candidate < hi) {
                break;
            }
            let cand_jet = delta_jet(p, candidate, 2);
            if cand_jet[1].abs() >= jet[1].abs() {
                break;
            }
            *root = candidate;
            jet = cand_jet;
        }
    }
    Ok(roots)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandEdges {
    pub edges: Vec<f64>,
    pub gap_closed: Vec<bool>,
}

/// Band edges from the critical points: on each band the signed discriminant
/// `(-1)^{N-n+1} Delta` decreases from `2` to `-2`.
pub fn band_edges(
    p: &CoefficientPoint,
    critical: &[f64],
    opts: &SpectrumOptions,
) -> Result<BandEdges> {
    p.check()?;
    let n = p.period();
    if critical.len() != n - 1 {
        return Err(Error::DimensionMismatch { expected: n - 1, found: critical.len() });
    }
    band_edges_unchecked(p, critical, spectral_bound_unchecked(p), opts)
}

pub(crate) fn band_edges_unchecked(
    p: &CoefficientPoint,
    critical: &[f64],
    bound: f64,
    opts: &SpectrumOptions,
) -> Result<BandEdges> {
    let n = p.period();
    let pad = bracket_bound(bound);
    let closed_tol = opts.closed_gap_factor * bound.powi(n as i32);
    let delta = |lam: f64| delta_jet(p, lam, 0)[0];

    let gap_closed: Vec<bool> = critical
        .iter()
        .enumerate()
        .map(|(i, &lam)| parity(n - (i + 1)) * delta(lam) - 2.0 <= closed_tol)
        .collect();

    let mut edges = vec![0.0; 2 * n];
    for band in 1..=n {
        let lo = if band == 1 { -pad } else { critical[band - 2] };
        let hi = if band == n { pad } else { critical[band - 1] };
        let sign = parity(n - band + 1);
        let (g_lo, g_hi) = (sign * delta(lo), sign * delta(hi));
        if g_lo < 2.0 - closed_tol.max(1e-12) || g_hi > -2.0 + closed_tol.max(1e-12) || !(lo < hi) {
            return Err(Error::Monotonicity { band, lo, hi });
        }

        let left = if band >= 2 && gap_closed[band - 2] {
            lo
        } else {
            crossing(p, sign, 2.0, lo, hi)
        };
        let right = if band < n && gap_closed[band - 1] {
            hi
        } else {
            crossing(p, sign, -2.0, lo, hi)
        };
        edges[2 * (band - 1)] = left;
        edges[2 * band - 1] = right;
    }
    Ok(BandEdges { edges, gap_closed })
}

/// Crossing of `sign * Delta = level` on `[lo, hi]` where the signed
/// discriminant decreases, by bisection and a guarded Newton step.
fn crossing(p: &CoefficientPoint, sign: f64, level: f64, lo: f64, hi: f64) -> f64 {
    let f = |lam: f64| sign * delta_jet(p, lam, 0)[0] - level;
    if f(lo) <= 0.0 {
        return lo;
    }
    if f(hi) >= 0.0 {
        return hi;
    }
    let root = bisect(f, lo, hi);
    let jet = delta_jet(p, root, 1);
    let (r0, slope) = (sign * jet[0] - level, sign * jet[1]);
    if r0 != 0.0 && slope != 0.0 {
        let candidate = root - r0 / slope;
        if candidate > lo && candidate < hi && f(candidate).abs() < r0.abs() {
            return candidate;
        }
    }
    root
}

/// Number of eigenvalues of a symmetric tridiagonal matrix strictly below `x`.
pub fn sturm_count(diagonal: &[f64], off_diagonal: &[f64], x: f64) -> usize {
    const PIVOT_GUARD: f64 = 1e-300;
    let mut count = 0;
    let mut q: f64 = 1.0;
    for i in 0..diagonal.len() {
        let coupling = if i == 0 { 0.0 } else { off_diagonal[i - 1] * off_diagonal[i - 1] };
        let q_safe = if q.abs() < PIVOT_GUARD { PIVOT_GUARD.copysign(q) } else { q };
        q = diagonal[i] - x - if i == 0 { 0.0 } else { coupling / q_safe };
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Zeros of `theta_{N+1}`: eigenvalues of the truncation with diagonal
/// `(b_2..b_N)` and off-diagonal `(a_2..a_{N-1})`, by Sturm bisection and a
/// Newton polish on the recursion.
pub fn dirichlet_eigenvalues(p: &CoefficientPoint) -> Result<Vec<f64>> {
    p.check()?;
    dirichlet_unchecked(p, spectral_bound_unchecked(p))
}

pub(crate) fn dirichlet_unchecked(p: &CoefficientPoint, bound: f64) -> Result<Vec<f64>> {
    let n = p.period();
    let m = n - 1;
    let a = p.a();
    let diagonal = &p.b()[1..];
    let off: Vec<f64> = a[1..n - 1].to_vec();
    let pad = bracket_bound(bound);

    let total = sturm_count(diagonal, &off, pad);
    let below = sturm_count(diagonal, &off, -pad);
    if total - below != m {
        return Err(Error::SturmCount { expected: m, found: total - below });
    }

    let tol = 1e-12 * bound;
    let mut mus = Vec::with_capacity(m);
    for j in 0..m {
        let (mut lo, mut hi) = (-pad, pad);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sturm_count(diagonal, &off, mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut mu = 0.5 * (lo + hi);
        let theta = |lam: f64| {
            let jets = FundamentalJets::compute(p, lam, 1);
            (jets.theta_n1[0], jets.theta_n1[1])
        };
        let (mut value, mut slope) = theta(mu);
        for _ in 0..3 {
            if value == 0.0 || slope == 0.0 {
                break;
            }
            let candidate = mu - value / slope;
            if !(candidate >= lo - tol && candidate <= hi + tol) {
                break;
            }
            let (cv, cs) = theta(candidate);
            if cv.abs() >= value.abs() {
                break;
            }
            mu = candidate;
            value = cv;
            slope = cs;
        }
        mus.push(mu);
    }
    Ok(mus)
}

/// Clamps each `mu_n` into `[lambda_n^-, lambda_n^+]`; closed gaps get `mu_n = lambda_n`.
pub fn clamp_dirichlet(
    raw: &[f64],
    edges: &[f64],
    critical: &[f64],
    gap_closed: &[bool],
    bound: f64,
) -> Result<Vec<f64>> {
    let slack = 1e-8 * bound;
    raw.iter()
        .enumerate()
        .map(|(i, &mu)| {
            if gap_closed[i] {
                return Ok(critical[i]);
            }
            let (lo, hi) = (edges[2 * i + 1], edges[2 * i + 2]);
            if mu < lo - slack || mu > hi + slack {
                return Err(Error::DirichletOutsideGap { n: i + 1, mu, lo, hi });
            }
            Ok(mu.clamp(lo, hi))
        })
        .collect()
}

impl SpectralData {
    pub fn compute(p: &CoefficientPoint) -> Result<Self> {
        Self::compute_with(p, &SpectrumOptions::default())
    }

    pub fn compute_with(p: &CoefficientPoint, opts: &SpectrumOptions) -> Result<Self> {
        p.check()?;
        let bound = spectral_bound_unchecked(p);
        let critical = critical_points_unchecked(p, bound)?;
        let BandEdges { edges, gap_closed } = band_edges_unchecked(p, &critical, bound, opts)?;
        let dirichlet_raw = dirichlet_unchecked(p, bound)?;
        let dirichlet = clamp_dirichlet(&dirichlet_raw, &edges, &critical, &gap_closed, bound)?;
        Ok(SpectralData { edges, critical, dirichlet, dirichlet_raw, gap_closed, bound })
    }

    pub fn period(&self) -> usize {
        self.edges.len() / 2
    }

    /// `lambda_n^-` and `lambda_n^+` for gap `n` in `1..N`.
    pub fn gap(&self, n: usize) -> (f64, f64) {
        (self.edges[2 * n - 1], self.edges[2 * n])
    }

    /// `sigma_n = [lambda_{n-1}^+, lambda_n^-]` for band `n` in `1..=N`.
    pub fn band(&self, n: usize) -> (f64, f64) {
        (self.edges[2 * n - 2], self.edges[2 * n - 1])
    }

    /// `c = (lambda_N^- - lambda_0^+)/2`.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.edges[self.edges.len() - 1] - self.edges[0])
    }

    /// `c_0 = (lambda_N^- + lambda_0^+)/2`.
    pub fn center(&self) -> f64 {
        0.5 * (self.edges[self.edges.len() - 1] + self.edges[0])
    }

    /// `prod (lambda - edge)` over all `2N` edges; equals `Delta^2 - 4`.
    pub fn edge_product(&self, lambda: f64) -> f64 {
        self.edges.iter().map(|e| lambda - e).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_point;
    use std::f64::consts::PI;

    fn n2_point() -> CoefficientPoint {
        CoefficientPoint::new(vec![0.3, -0.3], vec![0.5, -0.5]).unwrap()
    }

    #[test]
    fn bound_examples() {
        assert_eq!(spectral_bound(&CoefficientPoint::zero(5).unwrap()).unwrap(), 2.0);
        let b = spectral_bound(&n2_point()).unwrap();
        assert!((b - 2.5906770282577210).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_critical_points() {
        let c = critical_points(&CoefficientPoint::zero(3).unwrap()).unwrap();
        assert!((c[0] + 1.0).abs() < 1e-14 && (c[1] - 1.0).abs() < 1e-14);
        for n in 2..=10 {
            let c = critical_points(&CoefficientPoint::zero(n).unwrap()).unwrap();
            for (i, lam) in c.iter().enumerate() {
                let expect = 2.0 * (PI * (n - 1 - i) as f64 / n as f64).cos();
                assert!((lam - expect).abs() < 1e-12, "N={n} i={i}: {lam} vs {expect}");
            }
        }
    }

    #[test]
    fn n2_critical_point_is_origin() {
        let c = critical_points(&n2_point()).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].abs() < 1e-15);
    }

    #[test]
    fn chebyshev_edges_closed() {
        let s = SpectralData::compute(&CoefficientPoint::zero(2).unwrap()).unwrap();
        let expect = [-2.0, 0.0, 0.0, 2.0];
        for (e, x) in s.edges.iter().zip(expect) {
            assert!((e - x).abs() < 1e-12);
        }
        assert_eq!(s.gap_closed, vec![true]);
    }

    #[test]
    fn n2_edges_closed_form() {
        let s = SpectralData::compute(&n2_point()).unwrap();
        let outer = 2.1496349542386343;
        let inner = 0.78799139366146342;
        let expect = [-outer, -inner, inner, outer];
        for (e, x) in s.edges.iter().zip(expect) {
            assert!((e - x).abs() < 1e-13, "{e} vs {x}");
        }
        assert_eq!(s.gap_closed, vec![false]);
        assert!((s.dirichlet[0] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn sturm_counts_diagonal_matrix() {
        let d = [-1.0, 0.5, 3.0];
        let e = [0.0, 0.0];
        assert_eq!(sturm_count(&d, &e, -2.0), 0);
        assert_eq!(sturm_count(&d, &e, 0.0), 1);
        assert_eq!(sturm_count(&d, &e, 1.0), 2);
        assert_eq!(sturm_count(&d, &e, 4.0), 3);
    }

    #[test]
    fn dirichlet_of_free_matrix_sit_on_critical_points() {
        for n in 2..=8 {
            let p = CoefficientPoint::zero(n).unwrap();
            let mu = dirichlet_eigenvalues(&p).unwrap();
            let crit = critical_points(&p).unwrap();
            for (m, c) in mu.iter().zip(&crit) {
                assert!((m - c).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn dirichlet_match_sign_scan_of_recursion() {
        let p = random_point(6, 0.8, 21).unwrap();
        let mu = dirichlet_eigenvalues(&p).unwrap();
        let b = spectral_bound(&p).unwrap();
        let theta = |lam: f64| FundamentalJets::compute(&p, lam, 0).theta_n1[0];
        let grid = 200_000;
        let mut found = Vec::new();
        let mut prev = (-b, theta(-b));
        for i in 1..=grid {
            let lam = -b + 2.0 * b * i as f64 / grid as f64;
            let v = theta(lam);
            if v == 0.0 || (v > 0.0) != (prev.1 > 0.0) {
                let root = bisect(theta, prev.0, lam);
                found.push(root);
            }
            prev = (lam, v);
        }
        assert_eq!(found.len(), mu.len());
        for (f, m) in found.iter().zip(&mu) {
            assert!((f - m).abs() < 1e-9, "{f} vs {m}");
        }
    }

    #[test]
    fn critical_points_match_grid_scan() {
        let p = random_point(5, 0.8, 4).unwrap();
        let crit = critical_points(&p).unwrap();
        let b = spectral_bound(&p).unwrap();
        let d1 = |lam: f64| delta_jet(&p, lam, 1)[1];
        let grid = 100_000;
        let mut found = Vec::new();
        let mut prev = (-b, d1(-b));
        for i in 1..=grid {
            let lam = -b + 2.0 * b * i as f64 / grid as f64;
            let v = d1(lam);
            if (v > 0.0) != (prev.1 > 0.0) {
                found.push(bisect(d1, prev.0, lam));
            }
            prev = (lam, v);
        }
        assert_eq!(found.len(), crit.len());
        for (f, c) in found.iter().zip(&crit) {
            assert!((f - c).abs() < 1e-8);
        }
        // Rolle: zeros of Delta' and Delta'' interlace.
        let d2 = |lam: f64| delta_jet(&p, lam, 2)[2];
        for w in crit.windows(2) {
            assert!(d2(w[0]) * d2(w[1]) < 0.0);
        }
    }

    #[test]
    fn clamp_rejects_far_outside() {
        let err = clamp_dirichlet(&[1.0], &[-2.0, -0.1, 0.1, 2.0], &[0.0], &[false], 2.0);
        assert!(matches!(err, Err(Error::DirichletOutsideGap { n: 1, .. })));
        let ok = clamp_dirichlet(&[0.1 + 1e-10], &[-2.0, -0.1, 0.1, 2.0], &[0.0], &[false], 2.0);
        assert_eq!(ok.unwrap(), vec![0.1]);
    }
}
