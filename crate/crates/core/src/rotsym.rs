//! Rotationally symmetric reduction in any dimension.
//!
//! For `s = s(beta)` the endomorphism `tau_sharp[s]` has the radial eigenvalue
//! `lambda_r = s'' + s` once and the tangential eigenvalue
//! `lambda_t = s' cot(beta) + s` with multiplicity `n - 1`. The profile lives
//! on `N` cell centers `beta_i = (i + 1/2) h` plus one ghost value at
//! `theta + h/2`; the pole is closed by `s_{-1} = s_0` and the ghost is fixed by
//! the centered Robin row `(s_N - s_{N-1}) / h = cot(theta) (s_N + s_{N-1}) / 2`.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::banded::{BandError, BandMatrix};
use crate::continuation::{follow_path, Admissibility, HomotopyProblem, Iterate, StepRecord};
use crate::fd;
use crate::geometry::{ell_at, CapParams};
use crate::solver::{homotopy_value, q_of_t, SolveError, SolverSettings};
use crate::symfunc::binom;

/// `sigma_k` of the two-eigenvalue structure.
pub fn sigma_k_radial(n: usize, k: usize, lambda_r: f64, lambda_t: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    binom(n - 1, k) * lambda_t.powi(k as i32) + binom(n - 1, k - 1) * lambda_r * lambda_t.powi(k as i32 - 1)
}

/// Partial derivatives of [`sigma_k_radial`] in `(lambda_r, lambda_t)`.
fn sigma_k_radial_grad(n: usize, k: usize, lr: f64, lt: f64) -> (f64, f64) {
    let kf = k as f64;
    let d_r = binom(n - 1, k - 1) * lt.powi(k as i32 - 1);
    let d_t = binom(n - 1, k) * kf * lt.powi(k as i32 - 1)
        + if k >= 2 { binom(n - 1, k - 1) * lr * (kf - 1.0) * lt.powi(k as i32 - 2) } else { 0.0 };
    (d_r, d_t)
}

/// Radial profile on a cell-centered grid with a trailing ghost value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RotProfile {
    pub theta: f64,
    pub h: f64,
    /// `N` cell values followed by the ghost.
    pub s: Vec<f64>,
}

impl RotProfile {
    pub fn from_fn(theta: f64, n_nodes: usize, f: impl Fn(f64) -> f64) -> Self {
        let h = theta / n_nodes as f64;
        let s = (0..=n_nodes).map(|i| f((i as f64 + 0.5) * h)).collect();
        RotProfile { theta, h, s }
    }

    pub fn n_nodes(&self) -> usize {
        self.s.len() - 1
    }

    pub fn beta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    /// Value at extended index `i`, reflecting through the pole.
    fn ext(&self, i: isize) -> f64 {
        if i < 0 {
            self.s[(-1 - i) as usize]
        } else {
            self.s[i as usize]
        }
    }

    /// Value and first two derivatives at any `beta` in `[0, theta]` by cubic
    /// interpolation through the four nearest nodes.
    pub fn derivatives(&self, beta: f64) -> [f64; 3] {
        let n = self.n_nodes() as isize;
        let x = beta / self.h - 0.5;
        let start = (x.floor() as isize - 1).clamp(-2, n - 3);
        let idx: Vec<isize> = (start..start + 4).collect();
        let nodes: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) * self.h).collect();
        let w = fd::fornberg(beta, &nodes, 2);
        let mut out = [0.0; 3];
        for (m, o) in out.iter_mut().enumerate() {
            *o = idx.iter().zip(&w[m]).map(|(&i, w)| w * self.ext(i)).sum();
        }
        out
    }

    pub fn value(&self, beta: f64) -> f64 {
        self.derivatives(beta)[0]
    }

    /// `(lambda_r, lambda_t)` at `beta`; at the pole `lambda_t` takes its limit
    /// `s''(0) + s(0)`.
    pub fn lambdas(&self, beta: f64) -> (f64, f64) {
        let [v, d1, d2] = self.derivatives(beta);
        let lr = d2 + v;
        let lt = if beta < 1e-12 { lr } else { d1 / beta.tan() + v };
        (lr, lt)
    }

    /// Discrete eigenvalues at cell `i` from the centered stencil.
    pub fn node_lambdas(&self, i: usize) -> (f64, f64) {
        let ii = i as isize;
        let (a, b, c) = (self.ext(ii - 1), self.ext(ii), self.ext(ii + 1));
        let d1 = (c - a) / (2.0 * self.h);
        let d2 = (c - 2.0 * b + a) / (self.h * self.h);
        (d2 + b, d1 / self.beta(i).tan() + b)
    }

    /// Profile table `(beta, s, lambda_r, lambda_t, sigma_k)` at the pole, the
    /// cell centers and the boundary.
    pub fn to_csv(&self, params: &CapParams) -> String {
        let mut out = String::from("beta,s,lambda_r,lambda_t,sigma_k\n");
        let mut betas = vec![0.0];
        betas.extend((0..self.n_nodes()).map(|i| self.beta(i)));
        betas.push(self.theta);
        for b in betas {
            let (lr, lt) = self.lambdas(b);
            let sk = sigma_k_radial(params.n, params.k, lr, lt);
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", b, self.value(b), lr, lt, sk);
        }
        out
    }
}

/// `sigma_k` at the cell centers.
pub fn rotsym_sigma_k(profile: &RotProfile, params: &CapParams) -> Vec<f64> {
    (0..profile.n_nodes())
        .map(|i| {
            let (lr, lt) = profile.node_lambdas(i);
            sigma_k_radial(params.n, params.k, lr, lt)
        })
        .collect()
}

enum RotData {
    Path(Vec<f64>),
    Fixed { q: f64, rhs: Vec<f64> },
}

pub struct RotProblem {
    pub params: CapParams,
    pub theta: f64,
    pub h: f64,
    pub n_nodes: usize,
    pub delta_cone: f64,
    data: RotData,
}

impl RotProblem {
    /// Homotopy towards data `phi(beta)`.
    pub fn along_path(params: CapParams, n_nodes: usize, phi: impl Fn(f64) -> f64, delta_cone: f64) -> Result<Self, SolveError> {
        Self::build(params, n_nodes, phi, None, delta_cone)
    }

    /// `sigma_k = s^{q-1} rhs(beta)`.
    pub fn fixed(params: CapParams, n_nodes: usize, q: f64, rhs: impl Fn(f64) -> f64, delta_cone: f64) -> Result<Self, SolveError> {
        Self::build(params, n_nodes, rhs, Some(q), delta_cone)
    }

    fn build(
        params: CapParams,
        n_nodes: usize,
        f: impl Fn(f64) -> f64,
        fixed_q: Option<f64>,
        delta_cone: f64,
    ) -> Result<Self, SolveError> {
        params.validate()?;
        let h = params.theta / n_nodes as f64;
        let values: Vec<f64> = (0..n_nodes).map(|i| f((i as f64 + 0.5) * h)).collect();
        let m = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(m > 0.0) || values.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonPositive(m));
        }
        let data = match fixed_q {
            Some(q) => RotData::Fixed { q, rhs: values },
            None => RotData::Path(values),
        };
        Ok(RotProblem { params, theta: params.theta, h, n_nodes, delta_cone, data })
    }

    fn profile(&self, x: &[f64]) -> RotProfile {
        RotProfile { theta: self.theta, h: self.h, s: x.to_vec() }
    }

    fn data_at(&self, t: f64) -> (f64, Vec<f64>) {
        match &self.data {
            RotData::Fixed { q, rhs } => (*q, rhs.clone()),
            RotData::Path(phi) => {
                (q_of_t(t, self.params.p), phi.iter().map(|&v| homotopy_value(t, v, &self.params)).collect())
            }
        }
    }

    /// Centered differences from the compensated pair; pole reflection built in.
    fn diffs(&self, x: &Iterate, i: usize) -> (f64, f64, f64) {
        let at = |v: &[f64], j: isize| if j < 0 { v[(-1 - j) as usize] } else { v[j as usize] };
        let ii = i as isize;
        let d = |v: &[f64]| {
            let (a, b, c) = (at(v, ii - 1), at(v, ii), at(v, ii + 1));
            ((c - b) + (b - a), (c - b) - (b - a))
        };
        let (s1h, s2h) = d(&x.hi);
        let (s1l, s2l) = d(&x.lo);
        let h = self.h;
        ((s1h + s1l) / (2.0 * h), (s2h + s2l) / (h * h), x.hi[i] + x.lo[i])
    }

    fn lambdas(&self, x: &Iterate, i: usize) -> (f64, f64) {
        let (d1, d2, v) = self.diffs(x, i);
        let beta = (i as f64 + 0.5) * self.h;
        (d2 + v, d1 / beta.tan() + v)
    }
}

impl HomotopyProblem for RotProblem {
    fn dim(&self) -> usize {
        self.n_nodes + 1
    }

    fn residual(&self, t: f64, x: &Iterate) -> Vec<f64> {
        let (q, rhs) = self.data_at(t);
        let mut r = Vec::with_capacity(self.dim());
        for i in 0..self.n_nodes {
            let (lr, lt) = self.lambdas(x, i);
            let s = x.hi[i] + x.lo[i];
            let lower = if q == 1.0 { rhs[i] } else { s.powf(q - 1.0) * rhs[i] };
            r.push(sigma_k_radial(self.params.n, self.params.k, lr, lt) - lower);
        }
        let n = self.n_nodes;
        let diff = (x.hi[n] - x.hi[n - 1]) + (x.lo[n] - x.lo[n - 1]);
        let mean = 0.5 * ((x.hi[n] + x.lo[n]) + (x.hi[n - 1] + x.lo[n - 1]));
        r.push(diff / self.h - mean / self.theta.tan());
        r
    }

    fn jacobian(&self, t: f64, x: &Iterate) -> Result<BandMatrix, BandError> {
        let (q, rhs) = self.data_at(t);
        let n = self.n_nodes;
        let h = self.h;
        let mut jac = BandMatrix::zeros(self.dim(), 1, 1);
        for i in 0..n {
            let (lr, lt) = self.lambdas(x, i);
            let (gr, gt) = sigma_k_radial_grad(self.params.n, self.params.k, lr, lt);
            let cot = 1.0 / ((i as f64 + 0.5) * h).tan();
            // lambda_r = (a - 2b + c)/h^2 + b, lambda_t = cot (c - a)/(2h) + b
            let wa = gr / (h * h) - gt * cot / (2.0 * h);
            let wb = gr * (1.0 - 2.0 / (h * h)) + gt;
            let wc = gr / (h * h) + gt * cot / (2.0 * h);
            let mut diag = wb;
            if q != 1.0 {
                let s = x.hi[i] + x.lo[i];
                diag -= (q - 1.0) * s.powf(q - 2.0) * rhs[i];
            }
            if i == 0 {
                diag += wa;
            } else {
                jac.add(i, i - 1, wa)?;
            }
            jac.add(i, i, diag)?;
            jac.add(i, i + 1, wc)?;
        }
        let cot = 1.0 / self.theta.tan();
        jac.add(n, n - 1, -1.0 / h - 0.5 * cot)?;
        jac.add(n, n, 1.0 / h - 0.5 * cot)?;
        Ok(jac)
    }

    fn admissibility(&self, x: &Iterate) -> Admissibility {
        let min_value = x.values().iter().copied().fold(f64::INFINITY, f64::min);
        let mut lambda_min = f64::INFINITY;
        for i in 0..self.n_nodes {
            let (lr, lt) = self.lambdas(x, i);
            lambda_min = lambda_min.min(lr).min(lt);
        }
        Admissibility { min_value, lambda_min, admissible: min_value > 0.0 && lambda_min > self.delta_cone }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RotReport {
    pub params: CapParams,
    pub n_nodes: usize,
    pub steps: Vec<StepRecord>,
    pub rejected_steps: usize,
    pub final_residuals: Vec<f64>,
    pub residual: f64,
    pub lambda_min: f64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// The `t = 0` start `C(n,k)^{-1/k} ell`.
pub fn initial_profile(params: &CapParams, n_nodes: usize) -> RotProfile {
    let c = params.binom_nk().powf(-1.0 / params.k as f64);
    RotProfile::from_fn(params.theta, n_nodes, |b| c * ell_at(params.theta, b))
}

/// Solves the rotationally symmetric problem with data `phi(beta)` along the
/// same homotopy as the full-field solver.
pub fn solve_rotsym(
    phi: impl Fn(f64) -> f64,
    params: &CapParams,
    n_nodes: usize,
    settings: &SolverSettings,
) -> Result<(RotProfile, RotReport), SolveError> {
    let clock = Instant::now();
    let problem = RotProblem::along_path(*params, n_nodes, phi, settings.delta_cone)?;
    let x0 = Iterate::new(initial_profile(params, n_nodes).s);
    let newton_settings = crate::continuation::NewtonSettings {
        tol: settings.tol_solve,
        max_iter: settings.max_newton,
        max_backtracks: 30,
    };
    let (x, trace) = follow_path(&problem, x0, &settings.schedule, &newton_settings)?;
    let r = problem.residual(1.0, &x);
    let adm = problem.admissibility(&x);
    let profile = problem.profile(&x.values());
    let report = RotReport {
        params: *params,
        n_nodes,
        steps: trace.steps,
        rejected_steps: trace.rejected,
        final_residuals: trace.final_residuals,
        residual: crate::continuation::inf_norm(&r),
        lambda_min: adm.lambda_min,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    Ok((profile, report))
}

/// Comparison-principle check `H >= Lambda^{1/n} r_in^2 / 2` for the body of
/// a rotationally symmetric profile, with `Lambda = min det D^2 f` of the graph
/// over the base disk.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierReport {
    pub height: f64,
    pub r_in: f64,
    pub lambda: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Samples `det D^2 f = 1 / (lambda_r lambda_t^{n-1} cos^{n+2} beta)` at the
/// pole, the cell centers and the boundary.
pub fn barrier_height_check(profile: &RotProfile, params: &CapParams) -> BarrierReport {
    let n = params.n as i32;
    let theta = profile.theta;
    let [s0, _, _] = profile.derivatives(0.0);
    let [sb, db, _] = profile.derivatives(theta);
    let height = s0;
    let r_in = sb * theta.sin() + db * theta.cos();
    let mut betas = vec![0.0, theta];
    betas.extend((0..profile.n_nodes()).map(|i| profile.beta(i)));
    let lambda = betas
        .iter()
        .map(|&b| {
            let (lr, lt) = profile.lambdas(b);
            1.0 / (lr * lt.powi(n - 1) * b.cos().powi(n + 2))
        })
        .fold(f64::INFINITY, f64::min);
    let bound = 0.5 * lambda.powf(1.0 / params.n as f64) * r_in * r_in;
    let margin = height - bound;
    BarrierReport { height, r_in, lambda, bound, margin, pass: margin >= 0.0 }
}
