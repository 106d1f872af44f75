//! Fundamental solutions of the periodic three-term recursion
//!
//! `a_{n-1} y_{n-1} + a_n y_{n+1} + b_n y_n = lambda y_n`, `a_0 = a_N`,
//!
//! with `theta_0 = 1, theta_1 = 0` and `phi_0 = 0, phi_1 = 1`. The discriminant
//! is `Delta = phi_{N+1} + theta_N`.
//!
//! Derivatives in `lambda` are carried as truncated Taylor jets: multiplying a
//! jet by `(lambda - b_n)` shifts one coefficient up, so the jet recursion is the
//! formal derivative of the scalar one. Parameter derivatives are propagated as
//! forward tangents, one per coordinate of `(x, b)`, in the same sweep.

use crate::error::{Error, Result};
use crate::model::CoefficientPoint;

/// Taylor coefficients at `lambda` of `theta_N, theta_{N+1}, phi_N, phi_{N+1}`.
#[derive(Clone, Debug)]
pub struct FundamentalJets {
    pub lambda: f64,
    pub theta_n: Vec<f64>,
    pub theta_n1: Vec<f64>,
    pub phi_n: Vec<f64>,
    pub phi_n1: Vec<f64>,
}

impl FundamentalJets {
    /// Runs the jet recursion to Taylor order `order`. `p` is assumed valid.
    pub fn compute(p: &CoefficientPoint, lambda: f64, order: usize) -> Self {
        let n = p.period();
        let a = p.a();
        let b = p.b();
        let len = order + 1;

        let mut theta_prev = vec![0.0; len];
        let mut theta_cur = vec![0.0; len];
        let mut phi_prev = vec![0.0; len];
        let mut phi_cur = vec![0.0; len];
        theta_prev[0] = 1.0;
        phi_cur[0] = 1.0;

        let mut theta_n = Vec::new();
        let mut phi_n = Vec::new();
        for i in 0..n {
            if i == n - 1 {
                theta_n = theta_cur.clone();
                phi_n = phi_cur.clone();
            }
            let a_n = a[i];
            let a_prev = if i == 0 { a[n - 1] } else { a[i - 1] };
            let shift = lambda - b[i];
            let step = |prev: &[f64], cur: &[f64]| -> Vec<f64> {
                (0..len)
                    .map(|k| {
                        let lower = if k > 0 { cur[k - 1] } else { 0.0 };
                        (shift * cur[k] + lower - a_prev * prev[k]) / a_n
                    })
                    .collect()
            };
            let theta_next = step(&theta_prev, &theta_cur);
            let phi_next = step(&phi_prev, &phi_cur);
            theta_prev = std::mem::replace(&mut theta_cur, theta_next);
            phi_prev = std::mem::replace(&mut phi_cur, phi_next);
        }

        FundamentalJets { lambda, theta_n, theta_n1: theta_cur, phi_n, phi_n1: phi_cur }
    }

    /// Taylor coefficients of the discriminant.
    pub fn delta(&self) -> Vec<f64> {
        self.phi_n1.iter().zip(&self.theta_n).map(|(p, t)| p + t).collect()
    }
}

/// `(theta_0..theta_{N+1}, phi_0..phi_{N+1})` at `lambda`; `p` is assumed valid.
pub fn fundamental_solutions(p: &CoefficientPoint, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = p.period();
    let a = p.a();
    let b = p.b();
    let mut theta = vec![1.0, 0.0];
    let mut phi = vec![0.0, 1.0];
    for i in 0..n {
        let a_prev = if i == 0 { a[n - 1] } else { a[i - 1] };
        let shift = lambda - b[i];
        for y in [&mut theta, &mut phi] {
            let next = (shift * y[i + 1] - a_prev * y[i]) / a[i];
            y.push(next);
        }
    }
    (theta, phi)
}

/// `k!` times the `k`-th Taylor coefficient.
pub fn jet_derivative(coeffs: &[f64], k: usize) -> f64 {
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    coeffs[k] * fact
}

/// Taylor coefficients of the discriminant at `lambda`; `p` is assumed valid.
pub(crate) fn delta_jet(p: &CoefficientPoint, lambda: f64, order: usize) -> Vec<f64> {
    FundamentalJets::compute(p, lambda, order).delta()
}

/// Values of the fundamental solutions at indices `N`, `N+1` and of the
/// discriminant with up to three lambda-derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionFrame {
    pub lambda: f64,
    pub theta_n: f64,
    pub theta_n1: f64,
    pub phi_n: f64,
    pub phi_n1: f64,
    pub delta: f64,
    pub delta_d1: Option<f64>,
    pub delta_d2: Option<f64>,
    pub delta_d3: Option<f64>,
}

impl SolutionFrame {
    /// `theta_N phi_{N+1} - theta_{N+1} phi_N`, identically 1.
    pub fn wronskian(&self) -> f64 {
        self.theta_n * self.phi_n1 - self.theta_n1 * self.phi_n
    }
}

pub fn evaluate(p: &CoefficientPoint, lambda: f64, deriv_order: usize) -> Result<SolutionFrame> {
    p.check()?;
    if !lambda.is_finite() {
        return Err(Error::NonFinite("lambda"));
    }
    if deriv_order > 3 {
        return Err(Error::InvalidArgument(format!(
            "derivative order {deriv_order} exceeds 3"
        )));
    }
    let jets = FundamentalJets::compute(p, lambda, deriv_order);
    let delta = jets.delta();
    let d = |k: usize| (k <= deriv_order).then(|| jet_derivative(&delta, k));
    Ok(SolutionFrame {
        lambda,
        theta_n: jets.theta_n[0],
        theta_n1: jets.theta_n1[0],
        phi_n: jets.phi_n[0],
        phi_n1: jets.phi_n1[0],
        delta: delta[0],
        delta_d1: d(1),
        delta_d2: d(2),
        delta_d3: d(3),
    })
}

/// Gradient of a scalar functional of the recursion with respect to the full
/// coordinates `(x_1..x_N, b_1..b_N)` at fixed `lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient {
    pub d_x: Vec<f64>,
    pub d_b: Vec<f64>,
}

impl ParamGradient {
    /// Chain rule onto the reduced chart: `d/du_k = d/dx_k - d/dx_N`, same for `v`.
    pub fn reduced(&self) -> Vec<f64> {
        let last_x = *self.d_x.last().unwrap_or(&0.0);
        let last_b = *self.d_b.last().unwrap_or(&0.0);
        let m = self.d_x.len().saturating_sub(1);
        self.d_x[..m]
            .iter()
            .map(|d| d - last_x)
            .chain(self.d_b[..m].iter().map(|d| d - last_b))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    Delta,
    DeltaPrime,
    ThetaN,
    ThetaN1,
}

/// Parameter gradients of `Delta`, `Delta'`, `theta_N` and `theta_{N+1}` at one `lambda`.
#[derive(Clone, Debug)]
pub struct ParamGradients {
    pub delta: ParamGradient,
    pub delta_d1: ParamGradient,
    pub theta_n: ParamGradient,
    pub theta_n1: ParamGradient,
    /// `theta_N` and `theta_N'` at `lambda`, needed alongside the gradients.
    pub theta_n_value: [f64; 2],
    pub theta_n1_value: [f64; 2],
}

impl ParamGradients {
    pub fn get(&self, which: Functional) -> &ParamGradient {
        match which {
            Functional::Delta => &self.delta,
            Functional::DeltaPrime => &self.delta_d1,
            Functional::ThetaN => &self.theta_n,
            Functional::ThetaN1 => &self.theta_n1,
        }
    }
}

type Jet1 = [f64; 2];

/// Primal first-order jet of one fundamental solution plus its `2N` tangents.
struct TangentTrack {
    prev: Jet1,
    cur: Jet1,
    dprev: Vec<Jet1>,
    dcur: Vec<Jet1>,
    at_n: Option<(Jet1, Vec<Jet1>)>,
}

impl TangentTrack {
    fn new(y0: f64, y1: f64, params: usize) -> Self {
        TangentTrack {
            prev: [y0, 0.0],
            cur: [y1, 0.0],
            dprev: vec![[0.0; 2]; params],
            dcur: vec![[0.0; 2]; params],
            at_n: None,
        }
    }

    /// One step `n -> n+1` (0-based `i = n-1`).
    fn step(&mut self, i: usize, n: usize, a: &[f64], lambda: f64, b: &[f64]) {
        if i == n - 1 {
            self.at_n = Some((self.cur, self.dcur.clone()));
        }
        let a_n = a[i];
        let (prev_idx, a_prev) = if i == 0 { (n - 1, a[n - 1]) } else { (i - 1, a[i - 1]) };
        let shift = lambda - b[i];
        let (cur, prev) = (self.cur, self.prev);
        let next: Jet1 = [
            (shift * cur[0] - a_prev * prev[0]) / a_n,
            (shift * cur[1] + cur[0] - a_prev * prev[1]) / a_n,
        ];
        let mut dnext: Vec<Jet1> = self
            .dcur
            .iter()
            .zip(&self.dprev)
            .map(|(dc, dp)| {
                [
                    (shift * dc[0] - a_prev * dp[0]) / a_n,
                    (shift * dc[1] + dc[0] - a_prev * dp[1]) / a_n,
                ]
            })
            .collect();
        // d b_n
        for k in 0..2 {
            dnext[n + i][k] -= cur[k] / a_n;
        }
        // d a_{n-1} / d x_{n-1} = a_{n-1}
        for k in 0..2 {
            dnext[prev_idx][k] -= a_prev * prev[k] / a_n;
        }
        // d a_n / d x_n = a_n
        for k in 0..2 {
            dnext[i][k] -= next[k];
        }
        self.prev = cur;
        self.cur = next;
        self.dprev = std::mem::replace(&mut self.dcur, dnext);
    }
}

fn split(n: usize, tangents: impl Iterator<Item = f64>) -> ParamGradient {
    let all: Vec<f64> = tangents.collect();
    ParamGradient { d_x: all[..n].to_vec(), d_b: all[n..].to_vec() }
}

/// All parameter gradients at `lambda`, one forward sweep; `p` is assumed valid.
pub(crate) fn param_gradients_unchecked(p: &CoefficientPoint, lambda: f64) -> ParamGradients {
    let n = p.period();
    let a = p.a();
    let b = p.b();
    let mut theta = TangentTrack::new(1.0, 0.0, 2 * n);
    let mut phi = TangentTrack::new(0.0, 1.0, 2 * n);
    for i in 0..n {
        theta.step(i, n, &a, lambda, b);
        phi.step(i, n, &a, lambda, b);
    }
    let (theta_n, dtheta_n) = theta.at_n.take().expect("N >= 2 steps");

    ParamGradients {
        delta: split(n, phi.dcur.iter().zip(&dtheta_n).map(|(p, t)| p[0] + t[0])),
        delta_d1: split(n, phi.dcur.iter().zip(&dtheta_n).map(|(p, t)| p[1] + t[1])),
        theta_n: split(n, dtheta_n.iter().map(|t| t[0])),
        theta_n1: split(n, theta.dcur.iter().map(|t| t[0])),
        theta_n_value: theta_n,
        theta_n1_value: theta.cur,
    }
}

pub fn param_gradients(p: &CoefficientPoint, lambda: f64) -> Result<ParamGradients> {
    p.check()?;
    if !lambda.is_finite() {
        return Err(Error::NonFinite("lambda"));
    }
    Ok(param_gradients_unchecked(p, lambda))
}

/// Gradient of one functional in full coordinates.
pub fn param_gradient_delta(
    p: &CoefficientPoint,
    lambda: f64,
    which: Functional,
) -> Result<ParamGradient> {
    Ok(param_gradients(p, lambda)?.get(which).clone())
}
