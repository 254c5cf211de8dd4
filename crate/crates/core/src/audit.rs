//! Geometric audits of capillary support functions: body reconstruction,
//! mixed volumes, area measures, Steiner-type identities and the a priori
//! estimates.
//!
//! Reconstruction uses `X(u) = s u + grad s`, which in the chart reads
//! `X = s u + s_beta e_beta + (s_phi / sin beta) e_phi`. The base plane is
//! `{x_3 = 0}` and the Robin condition is exactly the statement that the
//! boundary ring of `X` lies in it.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::continuation::Iterate;
use crate::field::{integrate, CapField, Stencil, TauField};
use crate::geometry::{CapParams, ModelEll};
use crate::jet::{analytic_tau, AnalyticField, CapQuadrature};
use crate::solver::{CapProblem, SolveError};
use crate::symfunc::{binom, polarize_qk, sigma_k, SymEndo, SymError};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("field is not strictly convex: lambda_min = {0:e}")]
    NotConvex(f64),
    #[error("mixed volume needs k + 1 = {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("arguments live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

fn frame(beta: f64, phi: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (sb, cb) = beta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    ([sb * cp, sb * sp, cb], [cb * cp, cb * sp, -sb], [-sp, cp, 0.0])
}

/// Reconstructed hypersurface of a convex capillary support function.
#[derive(Clone, Debug, Serialize)]
pub struct BodyGeometry {
    #[serde(skip)]
    pub points: Vec<[f64; 3]>,
    /// `s` at the pole, extrapolated from the two innermost rings.
    pub pole_height: f64,
    pub height: f64,
    pub r_in: f64,
    pub r_out: f64,
    /// Largest `|x_3|` on the boundary ring.
    pub boundary_offset: f64,
    /// Secant slopes `|dx_3| / |dx'|` between consecutive rings on each meridian.
    #[serde(skip)]
    pub slopes: Vec<f64>,
    pub max_slope: f64,
    pub lambda_min: f64,
}

pub fn reconstruct(s: &CapField) -> Result<BodyGeometry, AuditError> {
    let g = s.grid;
    let st = Stencil::new(g);
    let tau = TauField::from_stencil(&st, &s.values, None);
    if !(tau.lambda_min > 0.0) {
        return Err(AuditError::NotConvex(tau.lambda_min));
    }
    let mut points = Vec::with_capacity(g.len());
    for i in 0..=g.n_beta {
        let beta = g.beta(i);
        for j in 0..g.n_phi {
            let jet = st.jet(g.idx(i, j), &s.values, None);
            let (u, eb, ep) = frame(beta, g.phi(j));
            let a = jet.p / beta.sin();
            points.push([0, 1, 2].map(|c| jet.v * u[c] + jet.b * eb[c] + a * ep[c]));
        }
    }
    let ring_mean = |i: usize| (0..g.n_phi).map(|j| s.get(i, j)).sum::<f64>() / g.n_phi as f64;
    let pole_height = (9.0 * ring_mean(0) - ring_mean(1)) / 8.0;
    let height = points.iter().map(|p| p[2]).fold(pole_height, f64::max);
    let radius = |p: &[f64; 3]| p[0].hypot(p[1]);
    let boundary = &points[g.idx(g.n_beta, 0)..];
    let r_in = boundary.iter().map(radius).fold(f64::INFINITY, f64::min);
    let r_out = boundary.iter().map(radius).fold(0.0, f64::max);
    let boundary_offset = boundary.iter().map(|p| p[2].abs()).fold(0.0, f64::max);
    let mut slopes = Vec::with_capacity(g.n_beta * g.n_phi);
    for i in 0..g.n_beta {
        for j in 0..g.n_phi {
            let a = points[g.idx(i, j)];
            let b = points[g.idx(i + 1, j)];
            let run = (b[0] - a[0]).hypot(b[1] - a[1]);
            slopes.push((b[2] - a[2]).abs() / run);
        }
    }
    let max_slope = slopes.iter().copied().fold(0.0, f64::max);
    Ok(BodyGeometry {
        points,
        pole_height,
        height,
        r_in,
        r_out,
        boundary_offset,
        slopes,
        max_slope,
        lambda_min: tau.lambda_min,
    })
}

/// Volume enclosed by the reconstructed graph and the base plane: cell areas
/// of the projected quadrilaterals times the mean corner height, plus the
/// polygon around the pole.
pub fn enclosed_volume(geom: &BodyGeometry, s: &CapField) -> f64 {
    let g = s.grid;
    let p = &geom.points;
    let mut vol = 0.0;
    for i in 0..g.n_beta {
        for j in 0..g.n_phi {
            let jn = (j + 1) % g.n_phi;
            let c = [p[g.idx(i, j)], p[g.idx(i + 1, j)], p[g.idx(i + 1, jn)], p[g.idx(i, jn)]];
            let d1 = [c[2][0] - c[0][0], c[2][1] - c[0][1]];
            let d2 = [c[3][0] - c[1][0], c[3][1] - c[1][1]];
            let area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0]).abs();
            vol += area * 0.25 * (c[0][2] + c[1][2] + c[2][2] + c[3][2]);
        }
    }
    let mut area = 0.0;
    let mut ring_height = 0.0;
    for j in 0..g.n_phi {
        let a = p[g.idx(0, j)];
        let b = p[g.idx(0, (j + 1) % g.n_phi)];
        area += 0.5 * (a[0] * b[1] - a[1] * b[0]);
        ring_height += a[2];
    }
    ring_height /= g.n_phi as f64;
    vol + area.abs() * 0.5 * (geom.pole_height + ring_height)
}

/// Point cloud `(u_beta, u_phi, X1, X2, X3)`.
pub fn embedding_csv(geom: &BodyGeometry, s: &CapField) -> String {
    let g = s.grid;
    let mut out = String::from("u_beta,u_phi,x1,x2,x3\n");
    for i in 0..=g.n_beta {
        for j in 0..g.n_phi {
            let x = geom.points[g.idx(i, j)];
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", g.beta(i), g.phi(j), x[0], x[1], x[2]);
        }
    }
    out
}

/// Support function of the parallel body `s + t ell`.
pub fn parallel_body(s: &CapField, t: f64) -> CapField {
    let ell = CapField::sample(s.grid, &ModelEll { theta: s.grid.theta });
    s.zip_with(&ell, |a, b| a + t * b)
}

/// `sum_j sigma_j(A) t^{k-j} C(n-j, k-j)`, the expansion of
/// `sigma_k(A + t id)`.
pub fn steiner_binomial(a: &SymEndo, t: f64, k: usize) -> f64 {
    let n = a.dim();
    let e = a.sigmas(k);
    (0..=k).map(|j| e[j] * t.powi((k - j) as i32) * binom(n - j, k - j)).sum()
}

/// `C(n,k) sum_j C(k,j) t^{k-j} Q_k(A,..,A, B,..,B)` with `j` copies of `A`,
/// the expansion of `sigma_k(A + t B)`.
pub fn steiner_mixed(a: &SymEndo, b: &SymEndo, t: f64, k: usize) -> Result<f64, SymError> {
    let n = a.dim();
    let mut total = 0.0;
    for j in 0..=k {
        let args: Vec<&SymEndo> = (0..k).map(|i| if i < j { a } else { b }).collect();
        total += binom(k, j) * t.powi((k - j) as i32) * polarize_qk(&args, k)?;
    }
    Ok(binom(n, k) * total)
}

/// `V(s_0, ..., s_k, ell, ..., ell) = (1/(n+1)) int s_0 Q_k(tau[s_1], ..., tau[s_k])`
/// with grid quadrature.
pub fn mixed_volume(args: &[&CapField], params: &CapParams) -> Result<f64, AuditError> {
    let k = params.k;
    if args.len() != k + 1 {
        return Err(AuditError::Arity { expected: k + 1, got: args.len() });
    }
    let g = args[0].grid;
    if args.iter().any(|a| a.grid != g) {
        return Err(AuditError::GridMismatch);
    }
    let st = Stencil::new(g);
    let taus: Vec<TauField> = args[1..].iter().map(|a| TauField::from_stencil(&st, &a.values, None)).collect();
    let mut total = 0.0;
    for i in 0..g.n_beta {
        let w = g.weight(i);
        for j in 0..g.n_phi {
            let node = g.idx(i, j);
            let slots: Vec<&SymEndo> = taus.iter().map(|t| &t.tau[node]).collect();
            total += w * args[0].values[node] * polarize_qk(&slots, k)?;
        }
    }
    Ok(total / (params.n as f64 + 1.0))
}

/// `(1/(n+1)) int s_0 sigma_k(tau[s]) / C(n,k)` with grid quadrature.
pub fn mixed_volume_special(s0: &CapField, s: &CapField, params: &CapParams) -> f64 {
    let tau = crate::field::tau_sharp(s);
    let g = s.grid;
    let mut total = 0.0;
    for i in 0..g.n_beta {
        for j in 0..g.n_phi {
            let node = g.idx(i, j);
            total += g.weight(i) * s0.values[node] * sigma_k(&tau.tau[node], params.k);
        }
    }
    total / (params.binom_nk() * (params.n as f64 + 1.0))
}

/// Mixed volume of closed-form fields with exact derivatives and
/// Gauss-Legendre quadrature.
pub fn mixed_volume_analytic(
    args: &[&dyn AnalyticField],
    params: &CapParams,
    quad: &CapQuadrature,
) -> Result<f64, AuditError> {
    let k = params.k;
    if args.len() != k + 1 {
        return Err(AuditError::Arity { expected: k + 1, got: args.len() });
    }
    let mut total = 0.0;
    for &(b, p, w) in &quad.nodes {
        let taus: Vec<SymEndo> = args[1..].iter().map(|f| analytic_tau(f, b, p)).collect();
        let slots: Vec<&SymEndo> = taus.iter().collect();
        total += w * args[0].value(b, p) * polarize_qk(&slots, k)?;
    }
    Ok(total / (params.n as f64 + 1.0))
}

pub fn mixed_volume_special_analytic(
    s0: &dyn AnalyticField,
    s: &dyn AnalyticField,
    params: &CapParams,
    quad: &CapQuadrature,
) -> f64 {
    let total = quad.integrate(|b, p| s0.value(b, p) * sigma_k(&analytic_tau(&s, b, p), params.k));
    total / (params.binom_nk() * (params.n as f64 + 1.0))
}

/// Smallest eigenvalue of `tau_sharp` over the quadrature nodes.
pub fn analytic_lambda_min(field: &dyn AnalyticField, quad: &CapQuadrature) -> f64 {
    quad.nodes.iter().map(|&(b, p, _)| analytic_tau(&field, b, p).min_eigenvalue()).fold(f64::INFINITY, f64::min)
}

/// Both sides of `V(s1, s2, s1, ...)^2 >= V(s1, s1, s1, ...) V(s2, s2, s1, ...)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AfCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `(lhs - rhs) / |rhs|`
    pub margin: f64,
}

fn af_from(mixed: f64, pure1: f64, pure2: f64) -> AfCheck {
    let lhs = mixed * mixed;
    let rhs = pure1 * pure2;
    AfCheck { lhs, rhs, margin: (lhs - rhs) / rhs.abs().max(f64::MIN_POSITIVE) }
}

pub fn af_inequality_check(s1: &CapField, s2: &CapField, params: &CapParams) -> Result<AfCheck, AuditError> {
    let k = params.k;
    let tail = |first: &CapField, second: &CapField| -> Vec<CapField> {
        let mut v = vec![first.clone(), second.clone()];
        v.extend(std::iter::repeat(s1.clone()).take(k - 1));
        v
    };
    let eval = |v: Vec<CapField>| mixed_volume(&v.iter().collect::<Vec<_>>(), params);
    let mixed = eval(tail(s2, s1))?;
    let pure1 = eval(tail(s1, s1))?;
    let pure2 = eval(tail(s2, s2))?;
    Ok(af_from(mixed, pure1, pure2))
}

pub fn af_inequality_check_analytic(
    s1: &dyn AnalyticField,
    s2: &dyn AnalyticField,
    params: &CapParams,
    quad: &CapQuadrature,
) -> Result<AfCheck, AuditError> {
    let k = params.k;
    let eval = |a: &dyn AnalyticField, b: &dyn AnalyticField| {
        let mut v: Vec<&dyn AnalyticField> = vec![a, b];
        v.extend(std::iter::repeat(s1).take(k - 1));
        mixed_volume_analytic(&v, params, quad)
    };
    let mixed = eval(s2, s1)?;
    let pure1 = eval(s1, s1)?;
    let pure2 = eval(s2, s2)?;
    Ok(af_from(mixed, pure1, pure2))
}

/// Density `C(n,k)^{-1} ell sigma_k(tau[s])` and its total mass.
#[derive(Clone, Debug)]
pub struct AreaMeasure {
    pub density: CapField,
    pub total: f64,
}

pub fn area_measure(s: &CapField, params: &CapParams) -> AreaMeasure {
    let tau = crate::field::tau_sharp(s);
    let ell = CapField::sample(s.grid, &ModelEll { theta: params.theta });
    let c = params.binom_nk();
    let values = (0..s.grid.len()).map(|n| ell.values[n] * sigma_k(&tau.tau[n], params.k) / c).collect();
    let density = CapField { grid: s.grid, values, even: s.even };
    let total = integrate(&density);
    AreaMeasure { density, total }
}

/// Volume gained by the parallel body at distance `rho`, computed
/// geometrically from reconstructed points and through the local Steiner
/// polynomial `sum_j rho^{n+1-j}/(n+1-j) int ell sigma_j(tau[s])`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteinerReport {
    pub rho: f64,
    pub geometric: f64,
    pub polynomial: f64,
    /// Polynomial coefficients of `rho^{n+1-j}`, `j = 0..=n`.
    pub coefficients: Vec<f64>,
    pub relative_gap: f64,
    pub pass: bool,
}

pub fn steiner_coefficients(s: &CapField, params: &CapParams) -> Vec<f64> {
    let n = params.n;
    let tau = crate::field::tau_sharp(s);
    let ell = CapField::sample(s.grid, &ModelEll { theta: params.theta });
    (0..=n)
        .map(|j| {
            let f = CapField {
                grid: s.grid,
                values: (0..s.grid.len()).map(|m| ell.values[m] * tau.tau[m].sigmas(j)[j]).collect(),
                even: s.even,
            };
            integrate(&f) / (n + 1 - j) as f64
        })
        .collect()
}

pub fn steiner_volume_check(s: &CapField, rho: f64, params: &CapParams, tol: f64) -> Result<SteinerReport, AuditError> {
    let n = params.n;
    let base = reconstruct(s)?;
    let grown_field = parallel_body(s, rho);
    let grown = reconstruct(&grown_field)?;
    let geometric = enclosed_volume(&grown, &grown_field) - enclosed_volume(&base, s);
    let coefficients = steiner_coefficients(s, params);
    let polynomial = coefficients.iter().enumerate().map(|(j, c)| c * rho.powi((n + 1 - j) as i32)).sum::<f64>();
    let relative_gap = (geometric - polynomial).abs() / polynomial.abs();
    Ok(SteinerReport { rho, geometric, polynomial, coefficients, relative_gap, pass: relative_gap <= tol })
}

/// One audited inequality `lhs >= rhs` (or informational when not mandatory).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRecord {
    pub name: String,
    pub statement: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub mandatory: bool,
}

impl AuditRecord {
    fn at_least(name: &str, statement: &str, lhs: f64, rhs: f64) -> Self {
        AuditRecord {
            name: name.into(),
            statement: statement.into(),
            lhs,
            rhs,
            margin: lhs - rhs,
            pass: lhs >= rhs,
            mandatory: true,
        }
    }

    fn at_most(name: &str, statement: &str, lhs: f64, rhs: f64) -> Self {
        AuditRecord { margin: rhs - lhs, pass: lhs <= rhs, ..Self::at_least(name, statement, lhs, rhs) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub records: Vec<AuditRecord>,
    pub height: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub max_s: f64,
    pub min_s: f64,
    pub max_sigma1: f64,
    pub lambda_min: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass || !r.mandatory)
    }

    pub fn failures(&self) -> Vec<&AuditRecord> {
        self.records.iter().filter(|r| r.mandatory && !r.pass).collect()
    }
}

/// Slack added to `tan(theta)` for secant slopes of the discrete body.
pub const SLOPE_SLACK: f64 = 0.02;

/// The a priori estimates for a solution `s` with data `phi`.
pub fn estimates_audit(s: &CapField, phi: &CapField, params: &CapParams) -> Result<AuditReport, AuditError> {
    let g = s.grid;
    let theta = params.theta;
    let geom = reconstruct(s)?;
    let tau = crate::field::tau_sharp(s);
    let max_s = s.max();
    let min_s = s.min();
    let phi0 = phi.min();
    let kp = params.k as f64 + 1.0 - params.p;
    let lower = (phi0 / params.binom_nk()).powf(1.0 / kp) * (1.0 - theta.cos()).powf(params.k as f64 / kp);
    let max_sigma1 = tau.tau.iter().map(|a| a.trace()).fold(f64::NEG_INFINITY, f64::max);
    let h = g.h;
    let mut records = vec![
        AuditRecord::at_least(
            "max_s_lower_bound",
            "max s >= (phi0/C(n,k))^(1/(k+1-p)) (1-cos theta)^(k/(k+1-p))",
            max_s,
            lower,
        ),
        AuditRecord::at_most("slope_bound", "secant slopes |Df| <= tan(theta) + 0.02", geom.max_slope, theta.tan() + SLOPE_SLACK),
        AuditRecord::at_least("height_positive", "H > 0", geom.height, 0.0),
        AuditRecord::at_least("min_s_height", "min s >= cos(theta) H", min_s, theta.cos() * geom.height),
        AuditRecord::at_least("strict_convexity", "lambda_1 of tau_sharp[s] > 0", tau.lambda_min, 0.0),
        AuditRecord {
            mandatory: false,
            pass: true,
            ..AuditRecord::at_least("sigma1_bound", "max sigma_1(tau_sharp[s]) (reported)", max_sigma1, max_sigma1)
        },
        AuditRecord::at_least("base_inradius", "r_in >= H / tan(theta)", geom.r_in, geom.height / theta.tan()),
        AuditRecord::at_most(
            "boundary_planarity",
            "max |x_3| on the boundary <= 10 h^2 max s",
            geom.boundary_offset,
            10.0 * h * h * max_s,
        ),
    ];
    // strict positivity for the convexity record
    if let Some(r) = records.iter_mut().find(|r| r.name == "strict_convexity") {
        r.pass = r.lhs > 0.0;
    }
    if let Some(r) = records.iter_mut().find(|r| r.name == "height_positive") {
        r.pass = r.lhs > 0.0;
    }
    Ok(AuditReport {
        records,
        height: geom.height,
        r_in: geom.r_in,
        r_out: geom.r_out,
        max_s,
        min_s,
        max_sigma1,
        lambda_min: tau.lambda_min,
    })
}

/// Interior and Robin residual infinity-norms of `sigma_k = s^{p-1} phi`.
pub fn pde_residual(s: &CapField, phi: &CapField, params: &CapParams) -> Result<(f64, f64), AuditError> {
    let problem = CapProblem::fixed(*params, params.p, phi, 0.0)?;
    let x = Iterate::new(problem.restrict(&crate::field::project_even(s)));
    let (interior, robin) = problem.residual_norms(0.0, &x);
    // odd part of the stored field counts as a residual as well
    let odd = s.evenness_defect();
    Ok((interior.max(odd), robin))
}

/// Every node's `tau_sharp` deviation from `c id`, reported by ring.
pub fn tau_ring_deviation(s: &CapField, c: f64) -> Vec<f64> {
    let tau = crate::field::tau_sharp(s);
    let g = s.grid;
    (0..=g.n_beta)
        .map(|i| {
            (0..g.n_phi)
                .map(|j| {
                    let a = &tau.tau[g.idx(i, j)];
                    (a.get(0, 0) - c).abs().max(a.get(0, 1).abs()).max((a.get(1, 1) - c).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect()
}
