//! Closed-form geometry of the spherical cap of normals.
//!
//! Points are written in polar coordinates `(beta, phi)` about `e_{n+1}` on the
//! un-shifted cap `{u in S^n : <u, e_{n+1}> >= cos(theta)}`; the shifted cap
//! used for capillary support functions is its translate by
//! `-cos(theta) e_{n+1}`, so `zeta = u - cos(theta) e_{n+1}`. The boundary is
//! exactly the circle `beta = theta` and the outward conormal there is
//! `d/dbeta`.
//!
//! Evenness is defined by the reflection `(x', x_{n+1}) -> (-x', x_{n+1})`.
//! In the chart this is `phi -> phi + pi` at fixed `beta`, which is the action
//! used everywhere below.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::{AnalyticField, Jet};
use crate::symfunc::binom;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("dimension n = {0} must be at least 2")]
    Dimension(usize),
    #[error("curvature order k = {k} must satisfy 1 <= k <= n = {n}")]
    Order { k: usize, n: usize },
    #[error("exponent p = {p} must satisfy 1 < p < k + 1 = {}", k + 1)]
    Exponent { p: f64, k: usize },
    #[error("contact angle theta = {0} must lie in (0, pi/2)")]
    Angle(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polar chart is degenerate at the pole (beta = {0:e})")]
    Pole(f64),
    #[error("factor violates the Neumann condition at the boundary: |d_beta v| = {0:e}")]
    Neumann(f64),
    #[error("factor is not even: |v(beta, phi) - v(beta, phi + pi)| = {0:e}")]
    NotEven(f64),
}

/// The problem quadruple `(n, k, p, theta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapParams {
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub theta: f64,
}

impl CapParams {
    pub fn new(n: usize, k: usize, p: f64, theta: f64) -> Result<Self, ParamError> {
        let params = CapParams { n, k, p, theta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.n < 2 {
            return Err(ParamError::Dimension(self.n));
        }
        if self.k < 1 || self.k > self.n {
            return Err(ParamError::Order { k: self.k, n: self.n });
        }
        if !(self.p > 1.0 && self.p < (self.k + 1) as f64) {
            return Err(ParamError::Exponent { p: self.p, k: self.k });
        }
        if !(self.theta > 0.0 && self.theta < 0.5 * PI) {
            return Err(ParamError::Angle(self.theta));
        }
        Ok(())
    }

    /// `C(n, k)`.
    pub fn binom_nk(&self) -> f64 {
        binom(self.n, self.k)
    }

    pub fn cot_theta(&self) -> f64 {
        1.0 / self.theta.tan()
    }

    /// Exponent `1 / (p + k - 1)` appearing in the structural hypotheses and
    /// in the homotopy.
    pub fn gamma(&self) -> f64 {
        1.0 / (self.p + self.k as f64 - 1.0)
    }
}

/// A point of the cap in polar coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapPoint {
    pub beta: f64,
    pub phi: f64,
}

impl CapPoint {
    pub fn new(beta: f64, phi: f64) -> Self {
        CapPoint { beta, phi }
    }

    pub fn in_cap(&self, theta: f64) -> bool {
        (0.0..=theta).contains(&self.beta)
    }
}

/// Unit normal direction `u = zeta + cos(theta) e_{n+1}` in R^3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbientDirection {
    pub u: [f64; 3],
}

impl AmbientDirection {
    pub fn from_point(pt: CapPoint) -> Self {
        let (sb, cb) = pt.beta.sin_cos();
        let (sp, cp) = pt.phi.sin_cos();
        AmbientDirection { u: [sb * cp, sb * sp, cb] }
    }

    /// The shifted point `zeta` on the capillary cap.
    pub fn zeta(&self, theta: f64) -> [f64; 3] {
        [self.u[0], self.u[1], self.u[2] - theta.cos()]
    }
}

/// The model function, support function of the unit capillary cap:
/// `1 - cos(theta) cos(beta)`.
pub fn ell(params: &CapParams, pt: CapPoint) -> f64 {
    ell_at(params.theta, pt.beta)
}

pub fn ell_at(theta: f64, beta: f64) -> f64 {
    1.0 - theta.cos() * beta.cos()
}

/// The model function evaluated through the shifted-cap formula
/// `sin^2(theta) - cos(theta) <zeta, e_{n+1}>`.
pub fn ell_ambient(theta: f64, zeta: [f64; 3]) -> f64 {
    theta.sin().powi(2) - theta.cos() * zeta[2]
}

/// Round metric components in the polar chart (n = 2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartMetric {
    pub g_bb: f64,
    pub g_bp: f64,
    pub g_pp: f64,
}

pub fn chart_metric(pt: CapPoint) -> Result<ChartMetric, GeometryError> {
    if pt.beta.abs() < 1e-12 {
        return Err(GeometryError::Pole(pt.beta));
    }
    Ok(ChartMetric { g_bb: 1.0, g_bp: 0.0, g_pp: pt.beta.sin().powi(2) })
}

/// Horizontal antipode `phi -> phi + pi`; the pole is fixed.
pub fn reflect_even(pt: CapPoint) -> CapPoint {
    if pt.beta == 0.0 {
        return pt;
    }
    CapPoint { beta: pt.beta, phi: (pt.phi + PI).rem_euclid(2.0 * PI) }
}

/// Closed-form model function `ell` as an analytic field.
#[derive(Clone, Copy, Debug)]
pub struct ModelEll {
    pub theta: f64,
}

impl AnalyticField for ModelEll {
    fn jet(&self, beta: f64, _phi: f64) -> Jet {
        Jet::beta(beta).cos() * (-self.theta.cos()) + 1.0
    }
}

/// Even factor with vanishing normal derivative on the boundary circle:
///
/// `v = 1 + a0 (cos b - cos t)^2
///        + sum_m sin^{2m} b (1 + kappa_m (cos b - cos t)) (a_m cos 2m phi + b_m sin 2m phi)`
///
/// with `kappa_m = 2m cos t / sin^2 t`. Every term is the restriction of a
/// smooth function on the sphere and is invariant under `phi -> phi + pi`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvenNeumannSeries {
    pub theta: f64,
    pub a0: f64,
    /// `(m, a_m, b_m)` with `m >= 1`.
    pub modes: Vec<(u32, f64, f64)>,
}

impl EvenNeumannSeries {
    pub fn constant(theta: f64) -> Self {
        EvenNeumannSeries { theta, a0: 0.0, modes: Vec::new() }
    }

    /// Coefficients drawn uniformly from `[-amplitude, amplitude]`.
    pub fn random<R: Rng + ?Sized>(theta: f64, max_mode: u32, amplitude: f64, rng: &mut R) -> Self {
        let a0 = amplitude * rng.gen_range(-1.0..1.0);
        let modes = (1..=max_mode)
            .map(|m| (m, amplitude * rng.gen_range(-1.0..1.0), amplitude * rng.gen_range(-1.0..1.0)))
            .collect();
        EvenNeumannSeries { theta, a0, modes }
    }

    /// Same shape with every non-constant coefficient multiplied by `c`.
    pub fn scaled_perturbation(&self, c: f64) -> Self {
        EvenNeumannSeries {
            theta: self.theta,
            a0: self.a0 * c,
            modes: self.modes.iter().map(|&(m, a, b)| (m, a * c, b * c)).collect(),
        }
    }
}

impl AnalyticField for EvenNeumannSeries {
    fn jet(&self, beta: f64, phi: f64) -> Jet {
        let b = Jet::beta(beta);
        let p = Jet::phi(phi);
        let ct = self.theta.cos();
        let st2 = self.theta.sin().powi(2);
        let dc = b.cos() - ct;
        let mut v = dc * dc * self.a0 + 1.0;
        let sb = b.sin();
        for &(m, am, bm) in &self.modes {
            let kappa = 2.0 * m as f64 * ct / st2;
            let radial = sb.powi(2 * m as i32) * (dc * kappa + 1.0);
            let ang = p * (2.0 * m as f64);
            v += radial * (ang.cos() * am + ang.sin() * bm);
        }
        v
    }
}

/// Capillary test function `s = scale * ell * v` for a Neumann factor `v`.
#[derive(Clone, Debug)]
pub struct CapillaryFunction<V> {
    pub theta: f64,
    pub scale: f64,
    pub factor: V,
}

impl<V: AnalyticField> AnalyticField for CapillaryFunction<V> {
    fn jet(&self, beta: f64, phi: f64) -> Jet {
        ModelEll { theta: self.theta }.jet(beta, phi) * self.factor.jet(beta, phi) * self.scale
    }
}

impl<V: AnalyticField> CapillaryFunction<V> {
    /// Analytic Robin residual `d_beta s - cot(theta) s` at `(theta, phi)`.
    pub fn robin_residual(&self, phi: f64) -> f64 {
        let j = self.jet(self.theta, phi);
        j.b - j.v / self.theta.tan()
    }
}

/// Builds `s = ell * v`, which satisfies the Robin condition exactly whenever
/// `d_beta v = 0` on the boundary. The Neumann condition and evenness of `v`
/// are checked on 64 boundary samples.
pub fn make_capillary_test_function<V: AnalyticField>(
    params: &CapParams,
    factor: V,
) -> Result<CapillaryFunction<V>, GeometryError> {
    let theta = params.theta;
    let samples = 64;
    let mut worst_neumann: f64 = 0.0;
    let mut worst_even: f64 = 0.0;
    for i in 0..samples {
        let phi = 2.0 * PI * i as f64 / samples as f64;
        let j = factor.jet(theta, phi);
        worst_neumann = worst_neumann.max(j.b.abs() / j.v.abs().max(1.0));
        let beta = theta * (i as f64 + 0.5) / samples as f64;
        worst_even = worst_even.max((factor.value(beta, phi) - factor.value(beta, phi + PI)).abs());
    }
    if worst_neumann > 1e-10 {
        return Err(GeometryError::Neumann(worst_neumann));
    }
    if worst_even > 1e-10 {
        return Err(GeometryError::NotEven(worst_even));
    }
    Ok(CapillaryFunction { theta, scale: 1.0, factor })
}

/// Random even capillary function `scale * ell * v`, `scale` uniform in
/// `[0.5, 2]` and `v` an [`EvenNeumannSeries`] with modes up to `max_mode`.
pub fn random_capillary_function<R: Rng + ?Sized>(
    theta: f64,
    max_mode: u32,
    amplitude: f64,
    rng: &mut R,
) -> CapillaryFunction<EvenNeumannSeries> {
    let scale = rng.gen_range(0.5..2.0);
    CapillaryFunction { theta, scale, factor: EvenNeumannSeries::random(theta, max_mode, amplitude, rng) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::FnField;

    fn params(theta: f64) -> CapParams {
        CapParams::new(2, 1, 1.5, theta).unwrap()
    }

    #[test]
    fn ell_examples() {
        let p = params(PI / 3.0);
        assert!((ell(&p, CapPoint::new(0.0, 0.0)) - 0.5).abs() < 1e-15);
        assert!((ell(&p, CapPoint::new(PI / 3.0, 1.0)) - 0.75).abs() < 1e-15);
        let theta = PI / 4.0;
        let pt = CapPoint::new(PI / 8.0, 0.3);
        let zeta = AmbientDirection::from_point(pt).zeta(theta);
        let oracle = ell_ambient(theta, zeta);
        assert!((ell(&params(theta), pt) - oracle).abs() < 1e-15);
        assert!((ell(&params(theta), pt) - (1.0 - (PI / 4.0).cos() * (PI / 8.0).cos())).abs() < 1e-15);
    }

    #[test]
    fn ell_is_monotone_and_bounded() {
        let theta = 1.2;
        let mut prev = ell_at(theta, 0.0);
        assert!((prev - (1.0 - theta.cos())).abs() < 1e-15);
        for i in 1..=100 {
            let v = ell_at(theta, theta * i as f64 / 100.0);
            assert!(v > prev);
            prev = v;
        }
        assert!((prev - theta.sin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn ell_satisfies_robin_exactly() {
        for theta in [0.3, PI / 4.0, 1.4] {
            let j = ModelEll { theta }.jet(theta, 0.0);
            assert!((j.b - j.v / theta.tan()).abs() < 1e-15);
        }
    }

    #[test]
    fn metric_examples() {
        let m = chart_metric(CapPoint::new(PI / 2.0, 0.0)).unwrap();
        assert!((m.g_pp - 1.0).abs() < 1e-15);
        let m = chart_metric(CapPoint::new(PI / 6.0, 0.0)).unwrap();
        assert!((m.g_pp - 0.25).abs() < 1e-15 && m.g_bb == 1.0 && m.g_bp == 0.0);
        assert!(matches!(chart_metric(CapPoint::new(0.0, 1.0)), Err(GeometryError::Pole(_))));
    }

    #[test]
    fn reflection_examples() {
        let r = reflect_even(CapPoint::new(0.3, 0.0));
        assert!((r.beta - 0.3).abs() < 1e-15 && (r.phi - PI).abs() < 1e-15);
        let r = reflect_even(CapPoint::new(0.3, PI));
        assert!(r.phi.abs() < 1e-15);
        assert_eq!(reflect_even(CapPoint::new(0.0, 0.7)), CapPoint::new(0.0, 0.7));
        let pt = CapPoint::new(0.8, 2.1);
        let rr = reflect_even(reflect_even(pt));
        assert!((rr.phi - pt.phi).abs() < 1e-14);
        let p = params(1.0);
        assert_eq!(ell(&p, pt), ell(&p, reflect_even(pt)));
    }

    #[test]
    fn param_ranges() {
        assert!(matches!(CapParams::new(2, 1, 2.0, 1.0), Err(ParamError::Exponent { .. })));
        assert!(matches!(CapParams::new(2, 1, 1.0, 1.0), Err(ParamError::Exponent { .. })));
        assert!(matches!(CapParams::new(2, 3, 1.5, 1.0), Err(ParamError::Order { .. })));
        assert!(matches!(CapParams::new(1, 1, 1.5, 1.0), Err(ParamError::Dimension(1))));
        assert!(matches!(CapParams::new(2, 1, 1.5, PI / 2.0), Err(ParamError::Angle(_))));
        assert!(CapParams::new(3, 2, 2.9, 0.1).is_ok());
    }

    #[test]
    fn test_function_examples() {
        let theta = PI / 3.0;
        let p = params(theta);
        let s = make_capillary_test_function(&p, EvenNeumannSeries::constant(theta)).unwrap();
        assert!((s.value(0.4, 1.0) - ell_at(theta, 0.4)).abs() < 1e-15);
        let mut scaled = s.clone();
        scaled.scale = 1.7;
        assert!((scaled.value(0.4, 1.0) - 1.7 * ell_at(theta, 0.4)).abs() < 1e-15);

        let factor = EvenNeumannSeries { theta, a0: 0.0, modes: vec![(1, 0.05, 0.0)] };
        let s = make_capillary_test_function(&p, factor).unwrap();
        for j in 0..128 {
            let phi = 2.0 * PI * j as f64 / 128.0;
            assert!(s.robin_residual(phi).abs() < 1e-12);
        }
    }

    #[test]
    fn random_factors_are_accepted_and_capillary() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let theta = 0.9;
        let p = params(theta);
        for _ in 0..20 {
            let v = EvenNeumannSeries::random(theta, 3, 0.1, &mut rng);
            let s = make_capillary_test_function(&p, v).unwrap();
            assert!(s.robin_residual(0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn non_neumann_factor_is_rejected() {
        let p = params(1.0);
        let bad = FnField(|b: Jet, _p: Jet| b.cos() + 1.0);
        assert!(matches!(make_capillary_test_function(&p, bad), Err(GeometryError::Neumann(_))));
        let odd = FnField(|b: Jet, p: Jet| (b - 1.0).powi(2) * p.cos() + 2.0);
        assert!(matches!(make_capillary_test_function(&p, odd), Err(GeometryError::NotEven(_))));
    }
}
