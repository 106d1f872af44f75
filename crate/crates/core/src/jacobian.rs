//! Jacobian of the height map in the reduced chart `(u, v)`.
//!
//! Rows are `(h_{11}, .., h_{1,N-1}, h_{21}, .., h_{2,N-1})`, columns
//! `(u_1, .., u_{N-1}, v_1, .., v_{N-1})`.
//!
//! Per gap:
//!
//! * `d mu_n = -d theta_{N+1}(mu_n) / theta'_{N+1}(mu_n)`,
//! * `d lambda_n = -d Delta'(lambda_n) / Delta''(lambda_n)`,
//! * `d h_{1n} = (theta'_N(mu_n) d mu_n + d theta_N(mu_n)) / theta_N(mu_n)`,
//! * `d xi_n = (-1)^{s_n} d Delta(lambda_n) sqrt(xi_n) / sinh sqrt(xi_n)`.
//!
//! `d h_{2n}` is `(d xi_n - 2 h_{1n} d h_{1n}) / (2 h_{2n})` away from
//! `h_{2n} = 0` and `beta_n (d lambda_n - d mu_n)` near it.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::heights::{height_details, height_map, GapHeight};
use crate::model::CoefficientPoint;
use crate::transfer::param_gradients_unchecked;

/// `|h_{2n}|` above `BRANCH_SWITCH (1 + |h_n|)` uses the division form.
pub const BRANCH_SWITCH: f64 = 1e-6;
/// Both branches are compared for `|h_{2n}|` within this factor of the switch.
pub const BRANCH_OVERLAP: f64 = 100.0;
/// Relative disagreement between branches that triggers a warning.
pub const BRANCH_TOLERANCE: f64 = 1e-4;
const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum H2Branch {
    Division,
    Product,
}

/// Reduced gradients of all per-gap quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct GapGradient {
    pub n: usize,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub h1: Vec<f64>,
    pub xi: Vec<f64>,
    /// `None` when `h_{2n} = 0`.
    pub h2_division: Option<Vec<f64>>,
    pub h2_product: Vec<f64>,
    pub branch: H2Branch,
    pub h2_value: f64,
    pub habs: f64,
}

impl GapGradient {
    pub fn h2(&self) -> &[f64] {
        match (self.branch, &self.h2_division) {
            (H2Branch::Division, Some(row)) => row,
            _ => &self.h2_product,
        }
    }

    /// Relative max-norm distance between the two `h_{2n}` rows.
    pub fn branch_disagreement(&self) -> Option<f64> {
        let a = self.h2_division.as_ref()?;
        let b = &self.h2_product;
        let scale = max_abs(a).max(max_abs(b)).max(f64::MIN_POSITIVE);
        Some(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale)
    }

    /// Whether `|h_{2n}|` is within `BRANCH_OVERLAP` of the switch threshold.
    pub fn in_overlap(&self) -> bool {
        let tau = BRANCH_SWITCH * (1.0 + self.habs);
        let h2 = self.h2_value.abs();
        h2 > tau / BRANCH_OVERLAP && h2 < tau * BRANCH_OVERLAP
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchWarning {
    pub n: usize,
    pub h2: f64,
    pub disagreement: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeightJacobian {
    pub matrix: DMatrix<f64>,
    pub branches: Vec<H2Branch>,
    pub warnings: Vec<BranchWarning>,
}

impl HeightJacobian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Ratio of extreme singular values; infinite when singular.
    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.clone().svd(false, false).singular_values;
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let b = DVector::from_column_slice(rhs);
        self.matrix.clone().lu().solve(&b).map(|x| x.as_slice().to_vec())
    }

    /// Row-major CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        matrix_csv(&self.matrix)
    }
}

pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

fn gap_gradient(p: &CoefficientPoint, bound: f64, g: &GapHeight) -> Result<GapGradient> {
    let n = p.period();
    let floor = DEGENERATE_TOL * bound.powi(n as i32 - 2).max(1.0);

    let at_mu = param_gradients_unchecked(p, g.mu);
    let theta_n1_d1 = at_mu.theta_n1_value[1];
    if theta_n1_d1.abs() < floor {
        return Err(Error::DegenerateZero { n: g.n, what: "theta_{N+1} at mu_n", derivative: theta_n1_d1 });
    }
    if g.delta_d2.abs() < floor {
        return Err(Error::DegenerateZero { n: g.n, what: "Delta' at lambda_n", derivative: g.delta_d2 });
    }
    let [theta_n, theta_n_d1] = at_mu.theta_n_value;
    if theta_n == 0.0 {
        return Err(Error::NormingSign { n: g.n, value: 0.0 });
    }
    let at_lambda = param_gradients_unchecked(p, g.lambda);

    let mu: Vec<f64> = at_mu.theta_n1.reduced().iter().map(|d| -d / theta_n1_d1).collect();
    let lambda: Vec<f64> = at_lambda.delta_d1.reduced().iter().map(|d| -d / g.delta_d2).collect();
    let h1: Vec<f64> = at_mu
        .theta_n
        .reduced()
        .iter()
        .zip(&mu)
        .map(|(d, dm)| (theta_n_d1 * dm + d) / theta_n)
        .collect();

    let root = g.habs;
    let factor = if root < 1e-4 { 1.0 - root * root / 6.0 } else { root / root.sinh() };
    let xi: Vec<f64> = at_lambda.delta.reduced().iter().map(|d| g.sign * d * factor).collect();

    let h2_division = (g.h2 != 0.0).then(|| {
        xi.iter()
            .zip(&h1)
            .map(|(dx, dh)| (dx - 2.0 * g.h1 * dh) / (2.0 * g.h2))
            .collect()
    });
    let h2_product = lambda.iter().zip(&mu).map(|(dl, dm)| g.beta * (dl - dm)).collect();
    let branch = if g.h2.abs() > BRANCH_SWITCH * (1.0 + g.habs) {
        H2Branch::Division
    } else {
        H2Branch::Product
    };

    Ok(GapGradient {
        n: g.n,
        mu,
        lambda,
        h1,
        xi,
        h2_division,
        h2_product,
        branch,
        h2_value: g.h2,
        habs: g.habs,
    })
}

/// Gradients for every gap, in gap order.
pub fn gap_gradients(p: &CoefficientPoint) -> Result<Vec<GapGradient>> {
    let details = height_details(p)?;
    details.gaps.iter().map(|g| gap_gradient(p, details.bound, g)).collect()
}

fn gap_index(p: &CoefficientPoint, n: usize) -> Result<usize> {
    let gaps = p.period() - 1;
    if n == 0 || n > gaps {
        return Err(Error::InvalidArgument(format!("gap index {n} not in 1..={gaps}")));
    }
    Ok(n - 1)
}

pub fn grad_mu(p: &CoefficientPoint, n: usize) -> Result<Vec<f64>> {
    let i = gap_index(p, n)?;
    Ok(gap_gradients(p)?.swap_remove(i).mu)
}

pub fn grad_lambda_crit(p: &CoefficientPoint, n: usize) -> Result<Vec<f64>> {
    let i = gap_index(p, n)?;
    Ok(gap_gradients(p)?.swap_remove(i).lambda)
}

pub fn grad_heights(p: &CoefficientPoint) -> Result<HeightJacobian> {
    let gaps = gap_gradients(p)?;
    let m = gaps.len();
    let mut matrix = DMatrix::zeros(2 * m, 2 * m);
    let mut branches = Vec::with_capacity(m);
    let mut warnings = Vec::new();
    for (i, g) in gaps.iter().enumerate() {
        for j in 0..2 * m {
            matrix[(i, j)] = g.h1[j];
            matrix[(m + i, j)] = g.h2()[j];
        }
        branches.push(g.branch);
        if g.in_overlap() {
            if let Some(d) = g.branch_disagreement().filter(|d| *d > BRANCH_TOLERANCE) {
                warnings.push(BranchWarning { n: g.n, h2: g.h2_value, disagreement: d });
            }
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("height Jacobian"));
    }
    Ok(HeightJacobian { matrix, branches, warnings })
}

/// Central differences in the reduced chart of any vector-valued map.
/// Column `j` holds the derivative along reduced coordinate `j`.
pub fn central_difference<F>(p: &CoefficientPoint, step: f64, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(&CoefficientPoint) -> Result<Vec<f64>>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("difference step {step} must be positive")));
    }
    let n = p.period();
    let base = p.reduce()?;
    let mut flat = base.to_flat();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(flat.len());
    for j in 0..flat.len() {
        let orig = flat[j];
        flat[j] = orig + step;
        let plus = f(&crate::model::ReducedPoint::from_flat(&flat)?.embed(n)?)?;
        flat[j] = orig - step;
        let minus = f(&crate::model::ReducedPoint::from_flat(&flat)?.embed(n)?)?;
        flat[j] = orig;
        columns.push(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * step)).collect());
    }
    let rows = columns.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]))
}

/// Finite-difference height Jacobian.
pub fn fd_jacobian(p: &CoefficientPoint, step: f64) -> Result<DMatrix<f64>> {
    central_difference(p, step, |q| Ok(height_map(q)?.to_flat()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_point;
    use crate::spectrum::{critical_points, dirichlet_eigenvalues};
    use crate::transfer::{param_gradients, FundamentalJets};

    fn n2_point() -> CoefficientPoint {
        CoefficientPoint::new(vec![0.3, -0.3], vec![0.5, -0.5]).unwrap()
    }

    fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs())) / scale
    }

    #[test]
    fn n2_closed_form_rows() {
        let p = n2_point();
        let mu = grad_mu(&p, 1).unwrap();
        assert!((mu[0]).abs() < 1e-14 && (mu[1] + 1.0).abs() < 1e-14, "{mu:?}");
        let lambda = grad_lambda_crit(&p, 1).unwrap();
        assert!(lambda.iter().all(|d| d.abs() < 1e-14), "{lambda:?}");
        let j = grad_heights(&p).unwrap();
        assert!((j.matrix[(0, 0)] + 2.0).abs() < 1e-13);
        assert!(j.matrix[(0, 1)].abs() < 1e-13);
        assert_eq!(j.branches, vec![H2Branch::Division]);
    }

    #[test]
    fn n2_height_row_matches_closed_form() {
        // |h|^2 = acosh(q)^2, q = (s^2 + 2cosh 2t)/2, h2^2 = |h|^2 - 4t^2.
        let (t, s) = (0.3_f64, 0.5_f64);
        let q = 0.5 * (s * s + 2.0 * (2.0 * t).cosh());
        let habs = q.acosh();
        let h2 = (habs * habs - 4.0 * t * t).sqrt();
        let dhabs = |dq: f64| dq / (q * q - 1.0).sqrt();
        let dh2_dt = (habs * dhabs(2.0 * (2.0 * t).sinh()) - 4.0 * t) / h2;
        let dh2_ds = habs * dhabs(s) / h2;
        let j = grad_heights(&n2_point()).unwrap();
        assert!((j.matrix[(1, 0)] - dh2_dt).abs() < 1e-12, "{} vs {dh2_dt}", j.matrix[(1, 0)]);
        assert!((j.matrix[(1, 1)] - dh2_ds).abs() < 1e-12, "{} vs {dh2_ds}", j.matrix[(1, 1)]);
    }

    #[test]
    fn gap_index_is_validated() {
        let p = n2_point();
        assert!(matches!(grad_mu(&p, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(grad_lambda_crit(&p, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mu_and_lambda_gradients_match_differences() {
        for (n, seed) in [(4, 3_u64), (5, 11), (6, 5)] {
            let p = random_point(n, 0.8, seed).unwrap();
            let gaps = gap_gradients(&p).unwrap();
            let fd_mu = central_difference(&p, 1e-6, dirichlet_eigenvalues).unwrap();
            let fd_lambda = central_difference(&p, 1e-6, critical_points).unwrap();
            for (i, g) in gaps.iter().enumerate() {
                for j in 0..2 * (n - 1) {
                    let scale = 1.0_f64.max(g.mu[j].abs());
                    assert!((g.mu[j] - fd_mu[(i, j)]).abs() < 1e-6 * scale, "mu N={n} gap {i} col {j}");
                    let scale = 1.0_f64.max(g.lambda[j].abs());
                    assert!(
                        (g.lambda[j] - fd_lambda[(i, j)]).abs() < 1e-6 * scale,
                        "lambda N={n} gap {i} col {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn height_jacobian_matches_differences() {
        for n in 2..=8 {
            for seed in 0..3 {
                let p = random_point(n, 0.8, 100 + seed).unwrap();
                let j = grad_heights(&p).unwrap();
                let fd = fd_jacobian(&p, 1e-6).unwrap();
                let err = max_rel(&j.matrix, &fd);
                assert!(err < 1e-6, "N={n} seed={seed}: {err:e}");
            }
        }
    }

    #[test]
    fn origin_uses_product_branch_and_is_invertible() {
        for n in 2..=7 {
            let p = CoefficientPoint::zero(n).unwrap();
            let j = grad_heights(&p).unwrap();
            assert!(j.branches.iter().all(|b| *b == H2Branch::Product));
            assert!(j.condition_number() < 1.0 / f64::EPSILON);
            let fd = fd_jacobian(&p, 1e-6).unwrap();
            assert!(max_rel(&j.matrix, &fd) < 1e-4, "N={n}");
        }
    }

    #[test]
    fn branches_agree_near_switch() {
        for s in [1e-8, 1e-7, 1e-6, 1e-5, 1e-4] {
            let p = CoefficientPoint::new(vec![0.3, -0.3], vec![s, -s]).unwrap();
            let g = &gap_gradients(&p).unwrap()[0];
            let d = g.branch_disagreement().unwrap();
            assert!(d < BRANCH_TOLERANCE, "s={s}: {d:e}");
            assert!(grad_heights(&p).unwrap().warnings.is_empty());
        }
    }

    #[test]
    fn random_jacobians_solve_accurately() {
        for n in 2..=8 {
            let p = random_point(n, 0.8, 7 * n as u64).unwrap();
            let j = grad_heights(&p).unwrap();
            assert!(j.condition_number() < 1.0 / f64::EPSILON);
            let rhs: Vec<f64> = (0..j.dim()).map(|i| (i as f64 * 0.7).sin()).collect();
            let x = j.solve(&rhs).unwrap();
            let r = &j.matrix * DVector::from_vec(x) - DVector::from_vec(rhs);
            assert!(r.amax() < 1e-8);
        }
    }

    #[test]
    fn product_identity_is_stationary() {
        // d[phi_{N+1}(mu_n) theta_N(mu_n)] = 0 since the product is identically 1.
        for n in 3..=6 {
            let p = random_point(n, 0.8, 40 + n as u64).unwrap();
            for g in gap_gradients(&p).unwrap() {
                let mu = dirichlet_eigenvalues(&p).unwrap()[g.n - 1];
                let jets = FundamentalJets::compute(&p, mu, 1);
                let grads = param_gradients(&p, mu).unwrap();
                let (th, dth) = (jets.theta_n[0], jets.theta_n[1]);
                let (ph, dph) = (jets.phi_n1[0], jets.phi_n1[1]);
                let d_theta = grads.theta_n.reduced();
                let d_phi: Vec<f64> =
                    grads.delta.reduced().iter().zip(&d_theta).map(|(d, t)| d - t).collect();
                for k in 0..2 * (n - 1) {
                    let total = (dph * th + ph * dth) * g.mu[k] + th * d_phi[k] + ph * d_theta[k];
                    assert!(total.abs() < 1e-8, "N={n} gap {} col {k}: {total:e}", g.n);
                }
            }
        }
    }

    #[test]
    fn csv_round_trips_digits() {
        let j = grad_heights(&n2_point()).unwrap();
        let csv = j.to_csv();
        let parsed: Vec<f64> = csv.split(['\n', ',']).filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed.len(), 4);
        assert_eq!(parsed[1], j.matrix[(0, 1)]);
        assert_eq!(parsed[2], j.matrix[(1, 0)]);
    }
}
