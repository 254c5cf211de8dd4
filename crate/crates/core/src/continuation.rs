//! Damped Newton corrector and adaptive continuation in a scalar parameter.
//!
//! Problems expose a residual, a banded Jacobian and an admissibility test;
//! the driver owns step control. Iterates are carried as compensated pairs
//! `hi + lo` so that residuals can be driven below the spacing of
//! representable values of `hi`.

use serde::Serialize;
use thiserror::Error;

use crate::banded::{BandError, BandMatrix};

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
pub enum ContinuationError {
    #[error("continuation stalled at t = {t} (dt = {dt:e} below {dt_min:e}); last residual {residual:e}, lambda_min {lambda_min:e}")]
    Stall {
        t: f64,
        dt: f64,
        dt_min: f64,
        residual: f64,
        lambda_min: f64,
        /// Steps accepted before the stall.
        accepted: Vec<StepRecord>,
    },
    #[error("initial iterate is not admissible: {0}")]
    Inadmissible(String),
}

/// Compensated iterate `hi + lo`.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub hi: Vec<f64>,
    pub lo: Vec<f64>,
}

impl Iterate {
    pub fn new(values: Vec<f64>) -> Self {
        let lo = vec![0.0; values.len()];
        Iterate { hi: values, lo }
    }

    pub fn len(&self) -> usize {
        self.hi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hi.is_empty()
    }

    /// Rounded values `hi + lo`.
    pub fn values(&self) -> Vec<f64> {
        self.hi.iter().zip(&self.lo).map(|(h, l)| h + l).collect()
    }

    /// `self + alpha * dx`, renormalized with an error-free sum.
    pub fn axpy(&self, alpha: f64, dx: &[f64]) -> Iterate {
        let mut hi = Vec::with_capacity(self.len());
        let mut lo = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let b = alpha * dx[i];
            let s = self.hi[i] + b;
            let bb = s - self.hi[i];
            let err = (self.hi[i] - (s - bb)) + (b - bb);
            let l = self.lo[i] + err;
            let s2 = s + l;
            lo.push(l - (s2 - s));
            hi.push(s2);
        }
        Iterate { hi, lo }
    }
}

/// Result of the admissibility test for an iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Admissibility {
    pub min_value: f64,
    pub lambda_min: f64,
    pub admissible: bool,
}

/// A family of square nonlinear systems `R(t, x) = 0`.
pub trait HomotopyProblem {
    fn dim(&self) -> usize;
    fn residual(&self, t: f64, x: &Iterate) -> Vec<f64>;
    fn jacobian(&self, t: f64, x: &Iterate) -> Result<BandMatrix, BandError>;
    fn admissibility(&self, x: &Iterate) -> Admissibility;
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { tol: 1e-9, max_iter: 30, max_backtracks: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub admissibility: Admissibility,
}

/// Damped Newton at fixed `t`. Each step is halved until the iterate stays
/// admissible and the residual infinity-norm decreases.
pub fn newton<P: HomotopyProblem + ?Sized>(
    problem: &P,
    t: f64,
    x: &mut Iterate,
    settings: &NewtonSettings,
) -> NewtonOutcome {
    let mut r = problem.residual(t, x);
    let mut norm = inf_norm(&r);
    let mut residuals = vec![norm];
    let mut adm = problem.admissibility(x);
    let mut iterations = 0;
    while norm > settings.tol && iterations < settings.max_iter {
        iterations += 1;
        let jac = match problem.jacobian(t, x) {
            Ok(j) => j,
            Err(e) => {
                log::debug!("jacobian assembly failed: {e}");
                break;
            }
        };
        let mut dx: Vec<f64> = r.iter().map(|v| -v).collect();
        if let Err(e) = jac.solve(&mut dx) {
            log::debug!("linear solve failed: {e}");
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_backtracks {
            let trial = x.axpy(alpha, &dx);
            let a = problem.admissibility(&trial);
            if a.admissible {
                let rt = problem.residual(t, &trial);
                let nt = inf_norm(&rt);
                if nt < norm {
                    accepted = Some((trial, rt, nt, a));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, rt, nt, a)) => {
                *x = trial;
                r = rt;
                norm = nt;
                adm = a;
                residuals.push(norm);
            }
            None => break,
        }
    }
    NewtonOutcome { converged: norm <= settings.tol, iterations, residuals, admissibility: adm }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub grow: f64,
    /// Steps needing at most this many Newton iterations enlarge `dt`.
    pub fast_iterations: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { dt0: 0.05, dt_min: 1e-4, dt_max: 0.25, grow: 1.5, fast_iterations: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub iterations: usize,
    pub residual: f64,
    pub lambda_min: f64,
    pub min_value: f64,
    pub max_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathTrace {
    pub steps: Vec<StepRecord>,
    pub rejected: usize,
    /// Residual history of the final corrector at `t = 1`.
    pub final_residuals: Vec<f64>,
}

/// Follows `R(t, x) = 0` from `t = 0` to `t = 1`, correcting at `t = 0` first.
/// Failed steps are retried with half the step; success in few iterations
/// grows it. A predictor is not used: the previous solution starts each
/// corrector.
pub fn follow_path<P: HomotopyProblem + ?Sized>(
    problem: &P,
    x0: Iterate,
    schedule: &Schedule,
    newton_settings: &NewtonSettings,
) -> Result<(Iterate, PathTrace), ContinuationError> {
    let mut x = x0;
    let a0 = problem.admissibility(&x);
    if !a0.admissible {
        return Err(ContinuationError::Inadmissible(format!(
            "min value {:e}, lambda_min {:e}",
            a0.min_value, a0.lambda_min
        )));
    }
    let mut trace = PathTrace { steps: Vec::new(), rejected: 0, final_residuals: Vec::new() };
    let record = |t: f64, dt: f64, out: &NewtonOutcome, x: &Iterate| {
        let v = x.values();
        StepRecord {
            t,
            dt,
            iterations: out.iterations,
            residual: *out.residuals.last().unwrap(),
            lambda_min: out.admissibility.lambda_min,
            min_value: v.iter().copied().fold(f64::INFINITY, f64::min),
            max_value: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    };
    let out = newton(problem, 0.0, &mut x, newton_settings);
    if !out.converged {
        return Err(ContinuationError::Stall {
            t: 0.0,
            dt: 0.0,
            dt_min: schedule.dt_min,
            residual: *out.residuals.last().unwrap(),
            lambda_min: out.admissibility.lambda_min,
            accepted: Vec::new(),
        });
    }
    trace.steps.push(record(0.0, 0.0, &out, &x));
    trace.final_residuals = out.residuals;
    let mut t = 0.0;
    let mut dt = schedule.dt0;
    while t < 1.0 {
        let step = dt.min(1.0 - t);
        let t_next = if t + step >= 1.0 - 1e-12 { 1.0 } else { t + step };
        let mut trial = x.clone();
        let out = newton(problem, t_next, &mut trial, newton_settings);
        if out.converged && out.admissibility.admissible {
            trace.steps.push(record(t_next, t_next - t, &out, &trial));
            log::debug!("accepted t = {t_next:.6} after {} iterations", out.iterations);
            if t_next == 1.0 {
                trace.final_residuals = out.residuals.clone();
            }
            x = trial;
            t = t_next;
            if out.iterations <= schedule.fast_iterations {
                dt = (dt * schedule.grow).min(schedule.dt_max);
            }
        } else {
            trace.rejected += 1;
            dt *= 0.5;
            log::debug!("rejected step to t = {t_next:.6}; dt -> {dt:e}");
            if dt < schedule.dt_min {
                return Err(ContinuationError::Stall {
                    t,
                    dt,
                    dt_min: schedule.dt_min,
                    residual: *out.residuals.last().unwrap(),
                    lambda_min: out.admissibility.lambda_min,
                    accepted: trace.steps,
                });
            }
        }
    }
    Ok((x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `x_i^3 + x_i - (1 + t) c_i = 0`, tridiagonal coupling free.
    struct Cubic {
        c: Vec<f64>,
    }

    impl HomotopyProblem for Cubic {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn residual(&self, t: f64, x: &Iterate) -> Vec<f64> {
            x.values().iter().zip(&self.c).map(|(x, c)| x * x * x + x - (1.0 + t) * c).collect()
        }
        fn jacobian(&self, _t: f64, x: &Iterate) -> Result<BandMatrix, BandError> {
            let mut m = BandMatrix::zeros(self.dim(), 1, 1);
            for (i, v) in x.values().iter().enumerate() {
                m.add(i, i, 3.0 * v * v + 1.0)?;
            }
            Ok(m)
        }
        fn admissibility(&self, x: &Iterate) -> Admissibility {
            let m = x.values().iter().copied().fold(f64::INFINITY, f64::min);
            Admissibility { min_value: m, lambda_min: m, admissible: m > 0.0 }
        }
    }

    #[test]
    fn compensated_sum_keeps_small_increments() {
        let x = Iterate::new(vec![1.0]);
        let y = x.axpy(1.0, &[1e-20]).axpy(1.0, &[1e-20]);
        assert_eq!(y.hi[0], 1.0);
        assert!((y.lo[0] - 2e-20).abs() < 1e-35);
    }

    #[test]
    fn newton_converges_quadratically() {
        let p = Cubic { c: vec![2.0, 10.0, 30.0] };
        let mut x = Iterate::new(vec![1.5, 1.0, 2.0]);
        let out = newton(&p, 0.0, &mut x, &NewtonSettings { tol: 1e-12, ..Default::default() });
        assert!(out.converged);
        let r = &out.residuals;
        let n = r.len();
        assert!(r[n - 2] < 1e-3 && r[n - 1] < 1e-12);
    }

    #[test]
    fn path_reaches_endpoint() {
        let p = Cubic { c: vec![2.0, 100.0] };
        let (x, trace) = follow_path(&p, Iterate::new(vec![1.0, 4.0]), &Schedule::default(), &NewtonSettings::default()).unwrap();
        assert_eq!(trace.steps.last().unwrap().t, 1.0);
        let v = x.values();
        assert!((v[0].powi(3) + v[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn inadmissible_start_is_rejected() {
        let p = Cubic { c: vec![1.0] };
        let err = follow_path(&p, Iterate::new(vec![-1.0]), &Schedule::default(), &NewtonSettings::default());
        assert!(matches!(err, Err(ContinuationError::Inadmissible(_))));
    }
}
