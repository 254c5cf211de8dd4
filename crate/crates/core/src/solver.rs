//! Continuation solver for `sigma_k(tau_sharp[s]) = s^(q-1) H(t, .)` with the
//! Robin condition, n = 2.
//!
//! The path starts from constant data at `t = 0`, whose even solution is
//! `C(n,k)^{-1/k} ell`, moves the data to `phi^{k/(p+k-1)}` at `t = 1/2` with
//! `q = 1`, then raises `q` to `p` while the data becomes `phi`.
//!
//! Unknowns live in the even subspace: node `(i, j)` and `(i, j + Nphi/2)`
//! share one unknown, so the system has `(Nbeta + 1) Nphi / 2` rows (the
//! boundary ring carries the Robin rows).

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::banded::{BandError, BandMatrix};
use crate::continuation::{
    follow_path, newton, Admissibility, ContinuationError, HomotopyProblem, Iterate, NewtonOutcome, NewtonSettings,
    Schedule, StepRecord,
};
use crate::field::{project_even, CapField, CapGrid, GridError, Stencil, TauField};
use crate::geometry::{CapParams, ModelEll, ParamError};
use crate::symfunc::{sigma_k, sigma_k_grad};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("full-field solves need n = 2 and k in {{1, 2}}; got n = {n}, k = {k}")]
    Unsupported { n: usize, k: usize },
    #[error("data must be positive; minimum is {0:e}")]
    NonPositive(f64),
    #[error("path parameter t = {0} outside [0, 1]")]
    TOutOfRange(f64),
    #[error("data grid {found} does not match solver grid {expected}")]
    GridMismatch { expected: String, found: String },
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverSettings {
    pub tol_solve: f64,
    pub delta_cone: f64,
    pub schedule: Schedule,
    pub max_newton: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol_solve: 1e-9, delta_cone: 1e-10, schedule: Schedule::default(), max_newton: 30 }
    }
}

impl SolverSettings {
    fn newton(&self) -> NewtonSettings {
        NewtonSettings { tol: self.tol_solve, max_iter: self.max_newton, max_backtracks: 30 }
    }
}

fn check_positive(phi: &CapField) -> Result<(), SolveError> {
    let m = phi.min();
    if !(m > 0.0) || !phi.values.iter().all(|v| v.is_finite()) {
        return Err(SolveError::NonPositive(m));
    }
    Ok(())
}

/// `phi^{(q+k-1)/(p+k-1)}`; `q = p` returns the data unchanged.
pub fn phi_q(phi: &CapField, q: f64, params: &CapParams) -> Result<CapField, SolveError> {
    check_positive(phi)?;
    let kf = params.k as f64;
    let e = (q + kf - 1.0) / (params.p + kf - 1.0);
    if e == 1.0 {
        return Ok(phi.clone());
    }
    Ok(phi.map(|v| v.powf(e)))
}

/// Exponent schedule: `q = 1` on `[0, 1/2]`, then `1 + (p - 1)(2t - 1)`.
pub fn q_of_t(t: f64, p: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t == 1.0 {
        p
    } else {
        1.0 + (p - 1.0) * (2.0 * t - 1.0)
    }
}

/// First half of the path: `((1 - 2t) + 2t phi^{-1/(p+k-1)})^{-k}`.
pub fn lower_branch(t: f64, phi: f64, params: &CapParams) -> f64 {
    let base = (1.0 - 2.0 * t) + 2.0 * t * phi.powf(-params.gamma());
    base.powi(-(params.k as i32))
}

/// Second half of the path: `phi^{(q(t)+k-1)/(p+k-1)}`.
pub fn upper_branch(t: f64, phi: f64, params: &CapParams) -> f64 {
    let q = 1.0 + (params.p - 1.0) * (2.0 * t - 1.0);
    phi.powf((q + params.k as f64 - 1.0) * params.gamma())
}

/// Pointwise homotopy data `H(t, .)` for a single value of `phi`.
pub fn homotopy_value(t: f64, phi: f64, params: &CapParams) -> f64 {
    if t <= 0.5 {
        lower_branch(t, phi, params)
    } else if t == 1.0 {
        phi
    } else {
        upper_branch(t, phi, params)
    }
}

/// `(q(t), H(t, .))`.
pub fn homotopy_rhs(t: f64, phi: &CapField, params: &CapParams) -> Result<(f64, CapField), SolveError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(SolveError::TOutOfRange(t));
    }
    check_positive(phi)?;
    if t == 1.0 {
        return Ok((params.p, phi.clone()));
    }
    Ok((q_of_t(t, params.p), phi.map(|v| homotopy_value(t, v, params))))
}

/// How the right-hand side depends on the path parameter.
#[derive(Clone, Debug)]
enum Data {
    Path(CapField),
    Fixed { q: f64, rhs: CapField },
}

/// The discrete operator pair (interior equation, Robin rows) on the even
/// subspace.
pub struct CapProblem {
    pub params: CapParams,
    pub grid: CapGrid,
    pub stencil: Stencil,
    pub delta_cone: f64,
    data: Data,
}

impl CapProblem {
    fn build(params: CapParams, grid: CapGrid, data: Data, delta_cone: f64) -> Result<Self, SolveError> {
        params.validate()?;
        if params.n != 2 || params.k > 2 {
            return Err(SolveError::Unsupported { n: params.n, k: params.k });
        }
        let f = match &data {
            Data::Path(f) => f,
            Data::Fixed { rhs, .. } => rhs,
        };
        if f.grid != grid {
            return Err(SolveError::GridMismatch { expected: grid.label(), found: f.grid.label() });
        }
        check_positive(f)?;
        let data = match data {
            Data::Path(f) => Data::Path(project_even(&f)),
            Data::Fixed { q, rhs } => Data::Fixed { q, rhs: project_even(&rhs) },
        };
        Ok(CapProblem { params, grid, stencil: Stencil::new(grid), delta_cone, data })
    }

    /// Problem following the homotopy towards data `phi`.
    pub fn along_path(params: CapParams, phi: &CapField, delta_cone: f64) -> Result<Self, SolveError> {
        Self::build(params, phi.grid, Data::Path(phi.clone()), delta_cone)
    }

    /// Problem `sigma_k = s^{q-1} rhs` independent of `t`.
    pub fn fixed(params: CapParams, q: f64, rhs: &CapField, delta_cone: f64) -> Result<Self, SolveError> {
        Self::build(params, rhs.grid, Data::Fixed { q, rhs: rhs.clone() }, delta_cone)
    }

    fn half(&self) -> usize {
        self.grid.half()
    }

    /// Reduced unknown of a full-grid node.
    pub fn reduced_index(&self, node: usize) -> usize {
        let g = &self.grid;
        let m = self.half();
        g.ring_of(node) * m + (node % g.n_phi) % m
    }

    /// Restricts an even field to the reduced unknowns.
    pub fn restrict(&self, s: &CapField) -> Vec<f64> {
        let m = self.half();
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..=self.grid.n_beta {
            for j in 0..m {
                out.push(s.get(i, j));
            }
        }
        out
    }

    /// Full-grid values of a reduced vector.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let m = self.half();
        let mut out = Vec::with_capacity(g.len());
        for i in 0..=g.n_beta {
            for j in 0..g.n_phi {
                out.push(x[i * m + j % m]);
            }
        }
        out
    }

    pub fn to_field(&self, x: &Iterate) -> CapField {
        CapField { grid: self.grid, values: self.expand(&x.values()), even: true }
    }

    /// `(q, H)` at reduced interior nodes.
    fn data_at(&self, t: f64) -> (f64, Vec<f64>) {
        let m = self.half();
        let g = &self.grid;
        let pick = |f: &CapField| -> Vec<f64> {
            let mut v = Vec::with_capacity(g.n_beta * m);
            for i in 0..g.n_beta {
                for j in 0..m {
                    v.push(f.get(i, j));
                }
            }
            v
        };
        match &self.data {
            Data::Fixed { q, rhs } => (*q, pick(rhs)),
            Data::Path(phi) => {
                let raw = pick(phi);
                (q_of_t(t, self.params.p), raw.iter().map(|&v| homotopy_value(t, v, &self.params)).collect())
            }
        }
    }

    pub fn tau_field(&self, x: &Iterate) -> TauField {
        TauField::from_stencil(&self.stencil, &self.expand(&x.hi), Some(&self.expand(&x.lo)))
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        let m = self.half();
        (3 * m, 2 * m)
    }

    /// Interior and Robin residual infinity-norms at `t`.
    pub fn residual_norms(&self, t: f64, x: &Iterate) -> (f64, f64) {
        let r = self.residual(t, x);
        let split = self.grid.n_beta * self.half();
        let inf = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        (inf(&r[..split]), inf(&r[split..]))
    }
}

impl HomotopyProblem for CapProblem {
    fn dim(&self) -> usize {
        (self.grid.n_beta + 1) * self.half()
    }

    fn residual(&self, t: f64, x: &Iterate) -> Vec<f64> {
        let g = &self.grid;
        let m = self.half();
        let hi = self.expand(&x.hi);
        let lo = self.expand(&x.lo);
        let (q, rhs) = self.data_at(t);
        let mut r = Vec::with_capacity(self.dim());
        for i in 0..g.n_beta {
            for j in 0..m {
                let node = g.idx(i, j);
                let a = self.stencil.tau(node, &hi, Some(&lo));
                let s = hi[node] + lo[node];
                let lower = if q == 1.0 { rhs[i * m + j] } else { s.powf(q - 1.0) * rhs[i * m + j] };
                r.push(sigma_k(&a, self.params.k) - lower);
            }
        }
        for j in 0..m {
            r.push(self.stencil.robin(j, &hi, Some(&lo)));
        }
        r
    }

    fn jacobian(&self, t: f64, x: &Iterate) -> Result<BandMatrix, BandError> {
        let g = &self.grid;
        let m = self.half();
        let hi = self.expand(&x.hi);
        let lo = self.expand(&x.lo);
        let (q, rhs) = self.data_at(t);
        let (kl, ku) = self.bandwidths();
        let mut jac = BandMatrix::zeros(self.dim(), kl, ku);
        let mut terms = Vec::with_capacity(64);
        for i in 0..g.n_beta {
            for j in 0..m {
                let row = i * m + j;
                let node = g.idx(i, j);
                let a = self.stencil.tau(node, &hi, Some(&lo));
                let d = sigma_k_grad(&a, self.params.k);
                terms.clear();
                self.stencil.tau_linearization(node, d.get(0, 0), d.get(0, 1), d.get(1, 1), &mut terms);
                if q != 1.0 {
                    let s = hi[node] + lo[node];
                    terms.push((node, -(q - 1.0) * s.powf(q - 2.0) * rhs[row]));
                }
                for &(col, w) in &terms {
                    jac.add(row, self.reduced_index(col), w)?;
                }
            }
        }
        for j in 0..m {
            let row = g.n_beta * m + j;
            terms.clear();
            self.stencil.robin_linearization(j, &mut terms);
            for &(col, w) in &terms {
                jac.add(row, self.reduced_index(col), w)?;
            }
        }
        Ok(jac)
    }

    fn admissibility(&self, x: &Iterate) -> Admissibility {
        let min_value = x.values().iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_value > 0.0) {
            return Admissibility { min_value, lambda_min: f64::NAN, admissible: false };
        }
        let lambda_min = self.tau_field(x).lambda_min;
        Admissibility { min_value, lambda_min, admissible: lambda_min > self.delta_cone }
    }
}

/// Margins of the structural hypotheses on the data: `psi = phi^{-1/(p+k-1)}`
/// should satisfy `tau_sharp[psi] >= 0` and `d_beta psi <= cot(theta) psi` on
/// the boundary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructuralReport {
    pub interior_margin: f64,
    pub boundary_margin: f64,
    pub interior_pass: bool,
    pub boundary_pass: bool,
}

pub fn structural_hypothesis_check(phi: &CapField, params: &CapParams) -> Result<StructuralReport, SolveError> {
    check_positive(phi)?;
    let psi = phi.map(|v| v.powf(-params.gamma()));
    let st = Stencil::new(phi.grid);
    let tau = TauField::from_stencil(&st, &psi.values, None);
    let interior_margin = (0..phi.grid.n_beta * phi.grid.n_phi).map(|n| tau.eigen[n][0]).fold(f64::INFINITY, f64::min);
    let boundary_margin =
        (0..phi.grid.n_phi).map(|j| -st.robin(j, &psi.values, None)).fold(f64::INFINITY, f64::min);
    // discrete data that is exactly on the threshold may round to -1e-12
    let slack = 1e-9;
    Ok(StructuralReport {
        interior_margin,
        boundary_margin,
        interior_pass: interior_margin >= -slack,
        boundary_pass: boundary_margin >= -slack,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub params: CapParams,
    pub n_beta: usize,
    pub n_phi: usize,
    pub settings: SolverSettings,
    pub steps: Vec<StepRecord>,
    pub rejected_steps: usize,
    /// Newton residual history at `t = 1`.
    pub final_residuals: Vec<f64>,
    pub interior_residual: f64,
    pub robin_residual: f64,
    pub lambda_min: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub structural: StructuralReport,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl SolveReport {
    /// Smallest convexity margin over every accepted step.
    pub fn path_lambda_min(&self) -> f64 {
        self.steps.iter().map(|s| s.lambda_min).fold(f64::INFINITY, f64::min)
    }
}

/// The `t = 0` start `C(n,k)^{-1/k} ell` on a grid.
pub fn initial_iterate(grid: CapGrid, params: &CapParams) -> CapField {
    let c = params.binom_nk().powf(-1.0 / params.k as f64);
    let mut f = CapField::sample(grid, &ModelEll { theta: params.theta }).map(|v| c * v);
    f.even = true;
    f
}

/// Solves the `t = 1` problem for data `phi` along the homotopy.
pub fn solve_path(phi: &CapField, params: &CapParams, settings: &SolverSettings) -> Result<(CapField, SolveReport), SolveError> {
    solve_path_from(phi, params, &initial_iterate(phi.grid, params), settings)
}

/// As [`solve_path`], starting the `t = 0` corrector from `start`.
pub fn solve_path_from(
    phi: &CapField,
    params: &CapParams,
    start: &CapField,
    settings: &SolverSettings,
) -> Result<(CapField, SolveReport), SolveError> {
    let clock = Instant::now();
    if (params.theta - phi.grid.theta).abs() > 1e-15 {
        return Err(SolveError::GridMismatch { expected: format!("theta={}", params.theta), found: phi.grid.label() });
    }
    let structural = structural_hypothesis_check(phi, params)?;
    let problem = CapProblem::along_path(*params, phi, settings.delta_cone)?;
    let x0 = Iterate::new(problem.restrict(&project_even(start)));
    let (x, trace) = follow_path(&problem, x0, &settings.schedule, &settings.newton())?;
    let (interior_residual, robin_residual) = problem.residual_norms(1.0, &x);
    let s = problem.to_field(&x);
    let adm = problem.admissibility(&x);
    let report = SolveReport {
        params: *params,
        n_beta: phi.grid.n_beta,
        n_phi: phi.grid.n_phi,
        settings: *settings,
        steps: trace.steps,
        rejected_steps: trace.rejected,
        final_residuals: trace.final_residuals,
        interior_residual,
        robin_residual,
        lambda_min: adm.lambda_min,
        min_s: s.min(),
        max_s: s.max(),
        structural,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    Ok((s, report))
}

/// Damped Newton for `sigma_k = s^{q-1} rhs` from `start`.
pub fn solve_fixed(
    params: &CapParams,
    q: f64,
    rhs: &CapField,
    start: &CapField,
    settings: &SolverSettings,
) -> Result<(CapField, NewtonOutcome), SolveError> {
    let problem = CapProblem::fixed(*params, q, rhs, settings.delta_cone)?;
    let mut x = Iterate::new(problem.restrict(&project_even(start)));
    let out = newton(&problem, 0.0, &mut x, &settings.newton());
    Ok((problem.to_field(&x), out))
}
