//! Inverse of the height map: find `p` with `h(p) = target`.
//!
//! Continuation in the target, `h(p) = t * target` for `t` from 0 to 1,
//! starting at `p = 0`. Each step is a damped Newton iteration with Armijo
//! backtracking on `|h(p) - t target|_2^2`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::heights::{height_map, HeightVector};
use crate::jacobian::{fd_jacobian, grad_heights};
use crate::model::{CoefficientPoint, ReducedPoint};

const ARMIJO_C: f64 = 1e-4;
const ALPHA_MIN: f64 = 1.0 / 1_048_576.0;
const FD_STEP: f64 = 1e-6;
/// Newton counts at or below this double the continuation step.
const FAST_STEP: usize = 4;
const POLISH_STEPS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Target for `|h(p) - t target|_inf`.
    pub tol: f64,
    /// Newton iterations allowed per continuation step.
    pub max_newton: usize,
    pub t_step_init: f64,
    pub t_step_min: f64,
    pub fd_jacobian: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_newton: 50, t_step_init: 0.25, t_step_min: 1e-4, fd_jacobian: false }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidArgument(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_newton == 0 {
            return Err(Error::InvalidArgument("max_newton must be at least 1".into()));
        }
        if !(self.t_step_min > 0.0 && self.t_step_min <= self.t_step_init && self.t_step_init <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < t_step_min ({}) <= t_step_init ({}) <= 1",
                self.t_step_min, self.t_step_init
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub continuation_ts: Vec<f64>,
    pub residuals: Vec<f64>,
    pub newton_counts: Vec<usize>,
}

struct Iterate {
    r: Vec<f64>,
    p: CoefficientPoint,
    f: DVector<f64>,
}

impl Iterate {
    fn at(r: Vec<f64>, n: usize, goal: &DVector<f64>) -> Result<Self> {
        let p = ReducedPoint::from_flat(&r)?.embed(n)?;
        let h = DVector::from_vec(height_map(&p)?.to_flat());
        let f = h - goal;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("height residual"));
        }
        Ok(Iterate { r, p, f })
    }

    fn residual(&self) -> f64 {
        self.f.amax()
    }
}

enum StepFailure {
    Fatal(Error),
    Retry,
}

fn newton_direction(it: &Iterate, opts: &SolveOptions) -> std::result::Result<DVector<f64>, StepFailure> {
    let j: DMatrix<f64> = if opts.fd_jacobian {
        fd_jacobian(&it.p, FD_STEP).map_err(|_| StepFailure::Retry)?
    } else {
        grad_heights(&it.p).map_err(|_| StepFailure::Retry)?.matrix
    };
    let m = j.nrows();
    let lu = j.lu();
    let diag = lu.u().diagonal().map(f64::abs);
    let (max, min) = (diag.max(), diag.min());
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if !(ratio > f64::EPSILON) {
        let col = diag.imin();
        let mut order = DVector::from_iterator(m, (0..m).map(|i| i as f64));
        lu.p().permute_rows(&mut order);
        let row = order[col] as usize;
        let (x, b) = (it.p.x().to_vec(), it.p.b().to_vec());
        return Err(StepFailure::Fatal(Error::SingularJacobian { gap: row % (m / 2) + 1, pivot_ratio: ratio, x, b }));
    }
    lu.solve(&it.f).ok_or(StepFailure::Retry)
}

/// One damped Newton update; `None` when the line search fails.
fn damped_step(
    it: &Iterate,
    dir: &DVector<f64>,
    n: usize,
    goal: &DVector<f64>,
) -> Option<Iterate> {
    let merit = it.f.norm_squared();
    let mut alpha = 1.0;
    while alpha >= ALPHA_MIN {
        let r: Vec<f64> = it.r.iter().zip(dir.iter()).map(|(r, d)| r - alpha * d).collect();
        if let Ok(next) = Iterate::at(r, n, goal) {
            if next.f.norm_squared() <= (1.0 - 2.0 * ARMIJO_C * alpha) * merit {
                return Some(next);
            }
        }
        alpha *= 0.5;
    }
    None
}

fn newton(
    start: &Iterate,
    n: usize,
    goal: &DVector<f64>,
    opts: &SolveOptions,
) -> std::result::Result<(Iterate, usize), StepFailure> {
    let mut it = Iterate::at(start.r.clone(), n, goal).map_err(|_| StepFailure::Retry)?;
    for k in 0..=opts.max_newton {
        if it.residual() <= opts.tol {
            return Ok((it, k));
        }
        if k == opts.max_newton {
            break;
        }
        let dir = newton_direction(&it, opts)?;
        it = damped_step(&it, &dir, n, goal).ok_or(StepFailure::Retry)?;
    }
    Err(StepFailure::Retry)
}

/// Extra full Newton steps at the final target while the residual keeps shrinking.
fn polish(mut it: Iterate, n: usize, goal: &DVector<f64>, opts: &SolveOptions) -> Iterate {
    for _ in 0..POLISH_STEPS {
        let Ok(dir) = newton_direction(&it, opts) else { break };
        let r: Vec<f64> = it.r.iter().zip(dir.iter()).map(|(r, d)| r - d).collect();
        match Iterate::at(r, n, goal) {
            Ok(next) if next.f.norm_squared() < it.f.norm_squared() => it = next,
            _ => break,
        }
    }
    it
}

/// Solves `h(p) = target` for `p` with period `n_period`.
pub fn invert(
    target: &HeightVector,
    n_period: usize,
    opts: &SolveOptions,
) -> Result<(CoefficientPoint, SolveTrace)> {
    opts.validate()?;
    if n_period < 2 {
        return Err(Error::InvalidArgument(format!("period {n_period} must be at least 2")));
    }
    let flat = target.to_flat();
    if flat.len() != 2 * (n_period - 1) {
        return Err(Error::DimensionMismatch { expected: 2 * (n_period - 1), found: flat.len() });
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target heights"));
    }
    let target = DVector::from_vec(flat);

    let mut trace = SolveTrace::default();
    let mut current = Iterate::at(vec![0.0; target.len()], n_period, &DVector::zeros(target.len()))?;
    let mut t = 0.0;
    let mut step = opts.t_step_init;
    while t < 1.0 {
        let t_next = (t + step).min(1.0);
        let goal = &target * t_next;
        match newton(&current, n_period, &goal, opts) {
            Ok((mut it, count)) => {
                if t_next == 1.0 {
                    it = polish(it, n_period, &goal, opts);
                }
                trace.continuation_ts.push(t_next);
                trace.residuals.push(it.residual());
                trace.newton_counts.push(count);
                current = it;
                t = t_next;
                if count <= FAST_STEP {
                    step = (2.0 * step).min(1.0);
                }
            }
            Err(StepFailure::Fatal(e)) => return Err(e),
            Err(StepFailure::Retry) => {
                step *= 0.5;
                if step < opts.t_step_min {
                    let (x, b) = (current.p.x().to_vec(), current.p.b().to_vec());
                    return Err(Error::Stall { t, x, b });
                }
            }
        }
    }
    Ok((current.p, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_point;

    fn inf_dist(p: &CoefficientPoint, q: &CoefficientPoint) -> f64 {
        p.x().iter().zip(q.x()).chain(p.b().iter().zip(q.b())).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    #[test]
    fn zero_target_gives_origin() {
        for n in 2..=6 {
            let (p, trace) = invert(&HeightVector::zeros(n), n, &SolveOptions::default()).unwrap();
            assert!(p.sup_norm() <= 1e-10);
            assert_eq!(trace.newton_counts[0], 0);
        }
    }

    #[test]
    fn n2_example_recovered() {
        let target = HeightVector::from_components(vec![-0.6], vec![0.48085517183119141]).unwrap();
        let (p, _) = invert(&target, 2, &SolveOptions::default()).unwrap();
        let expected = CoefficientPoint::new(vec![0.3, -0.3], vec![0.5, -0.5]).unwrap();
        assert!(inf_dist(&p, &expected) < 1e-6, "{p:?}");
    }

    #[test]
    fn round_trip_random_points() {
        for n in 2..=6 {
            for seed in 0..4 {
                let p = random_point(n, 0.8, seed).unwrap();
                let h = height_map(&p).unwrap();
                let (q, trace) = invert(&h, n, &SolveOptions::default()).unwrap();
                assert!(inf_dist(&p, &q) <= 1e-8, "N={n} seed={seed}: {:e}", inf_dist(&p, &q));
                assert!(trace.residuals.iter().all(|r| *r <= 1e-10));
                assert_eq!(*trace.continuation_ts.last().unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn fd_jacobian_mode_converges() {
        let p = random_point(4, 0.5, 9).unwrap();
        let h = height_map(&p).unwrap();
        let opts = SolveOptions { fd_jacobian: true, tol: 1e-9, ..SolveOptions::default() };
        let (q, _) = invert(&h, 4, &opts).unwrap();
        assert!(inf_dist(&p, &q) <= 1e-7);
    }

    #[test]
    fn deterministic_traces() {
        let p = random_point(5, 0.8, 21).unwrap();
        let h = height_map(&p).unwrap();
        let a = invert(&h, 5, &SolveOptions::default()).unwrap();
        let b = invert(&h, 5, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        let h = HeightVector::zeros(3);
        assert!(matches!(
            invert(&h, 2, &SolveOptions::default()),
            Err(Error::DimensionMismatch { expected: 2, found: 4 })
        ));
        let bad = SolveOptions { t_step_min: 0.5, t_step_init: 0.25, ..SolveOptions::default() };
        assert!(matches!(invert(&h, 3, &bad), Err(Error::InvalidArgument(_))));
        let bad = SolveOptions { tol: 0.0, ..SolveOptions::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tiny_step_budget_stalls() {
        let target = HeightVector::from_components(vec![3.0], vec![-4.0]).unwrap();
        let opts = SolveOptions { max_newton: 1, t_step_init: 1.0, t_step_min: 0.5, ..SolveOptions::default() };
        match invert(&target, 2, &opts) {
            Err(Error::Stall { t, x, .. }) => {
                assert!(t < 1.0);
                assert_eq!(x.len(), 2);
            }
            other => panic!("expected stall, got {other:?}"),
        }
    }
}
