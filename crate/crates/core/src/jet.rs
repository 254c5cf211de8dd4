//! Second-order forward-mode jets in the chart variables `(beta, phi)`.
//!
//! A [`Jet`] carries a value together with its first and second partial
//! derivatives. Closed-form fields (the model function, capillary test
//! functions) are written once in terms of jets and then evaluated with exact
//! derivatives, which gives a discretization-free route to `tau_sharp` and to
//! every integral built from it.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::symfunc::SymEndo;

/// Value plus first and second partials with respect to `beta` and `phi`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub b: f64,
    pub p: f64,
    pub bb: f64,
    pub bp: f64,
    pub pp: f64,
}

impl Jet {
    pub const fn constant(v: f64) -> Self {
        Jet { v, b: 0.0, p: 0.0, bb: 0.0, bp: 0.0, pp: 0.0 }
    }

    /// The coordinate function `beta` at the given point.
    pub const fn beta(beta: f64) -> Self {
        Jet { v: beta, b: 1.0, p: 0.0, bb: 0.0, bp: 0.0, pp: 0.0 }
    }

    /// The coordinate function `phi` at the given point.
    pub const fn phi(phi: f64) -> Self {
        Jet { v: phi, b: 0.0, p: 1.0, bb: 0.0, bp: 0.0, pp: 0.0 }
    }

    /// Compose with a scalar function given its value and first two derivatives
    /// at `self.v`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        Jet {
            v: f0,
            b: f1 * self.b,
            p: f1 * self.p,
            bb: f2 * self.b * self.b + f1 * self.bb,
            bp: f2 * self.b * self.p + f1 * self.bp,
            pp: f2 * self.p * self.p + f1 * self.pp,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    pub fn powi(self, n: i32) -> Self {
        let x = self.v;
        match n {
            0 => Jet::constant(1.0),
            1 => self,
            _ => {
                let nf = n as f64;
                self.chain(x.powi(n), nf * x.powi(n - 1), nf * (nf - 1.0) * x.powi(n - 2))
            }
        }
    }

    /// Real power; requires `self.v > 0` unless `a` is a non-negative integer.
    pub fn powf(self, a: f64) -> Self {
        let x = self.v;
        self.chain(x.powf(a), a * x.powf(a - 1.0), a * (a - 1.0) * x.powf(a - 2.0))
    }

    pub fn recip(self) -> Self {
        let x = self.v;
        self.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            b: self.b + o.b,
            p: self.p + o.p,
            bb: self.bb + o.bb,
            bp: self.bp + o.bp,
            pp: self.pp + o.pp,
        }
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, c: f64) -> Jet {
        self + (-c)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            b: self.b * o.v + self.v * o.b,
            p: self.p * o.v + self.v * o.p,
            bb: self.bb * o.v + 2.0 * self.b * o.b + self.v * o.bb,
            bp: self.bp * o.v + self.b * o.p + self.p * o.b + self.v * o.bp,
            pp: self.pp * o.v + 2.0 * self.p * o.p + self.v * o.pp,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet {
            v: self.v * c,
            b: self.b * c,
            p: self.p * c,
            bb: self.bb * c,
            bp: self.bp * c,
            pp: self.pp * c,
        }
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

/// A scalar field on the cap with closed-form derivatives.
pub trait AnalyticField: Sync {
    fn jet(&self, beta: f64, phi: f64) -> Jet;

    fn value(&self, beta: f64, phi: f64) -> f64 {
        self.jet(beta, phi).v
    }
}

impl<T: AnalyticField + ?Sized> AnalyticField for &T {
    fn jet(&self, beta: f64, phi: f64) -> Jet {
        (**self).jet(beta, phi)
    }
}

/// Wraps a closure written in jet arithmetic, `|beta, phi| -> Jet`.
pub struct FnField<F>(pub F);

impl<F> AnalyticField for FnField<F>
where
    F: Fn(Jet, Jet) -> Jet + Sync,
{
    fn jet(&self, beta: f64, phi: f64) -> Jet {
        (self.0)(Jet::beta(beta), Jet::phi(phi))
    }
}

/// `tau_sharp` of a closed-form field in the orthonormal frame
/// `(e_beta, e_phi / sin(beta))`. Requires `beta > 0`.
pub fn analytic_tau(field: &impl AnalyticField, beta: f64, phi: f64) -> SymEndo {
    tau_from_jet(field.jet(beta, phi), beta)
}

/// `tau_sharp` from chart derivatives at polar angle `beta > 0`.
pub fn tau_from_jet(j: Jet, beta: f64) -> SymEndo {
    let (sb, cb) = beta.sin_cos();
    let cot = cb / sb;
    let a11 = j.bb + j.v;
    let a12 = (j.bp - cot * j.p) / sb;
    let a22 = j.pp / (sb * sb) + cot * j.b + j.v;
    SymEndo::from_2x2(a11, a12, a22)
}

/// Tensor-product rule on the cap: Gauss-Legendre in `beta` against the
/// `sin(beta)` area density, uniform in `phi`.
#[derive(Clone, Debug)]
pub struct CapQuadrature {
    pub nodes: Vec<(f64, f64, f64)>,
}

impl CapQuadrature {
    pub fn new(theta: f64, n_beta: usize, n_phi: usize) -> Self {
        let (x, w) = gauss_legendre(n_beta);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_beta * n_phi);
        for (xi, wi) in x.iter().zip(&w) {
            let beta = 0.5 * theta * (xi + 1.0);
            let wb = 0.5 * theta * wi * beta.sin() * dphi;
            for j in 0..n_phi {
                nodes.push((beta, j as f64 * dphi, wb));
            }
        }
        CapQuadrature { nodes }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(b, p, w)| w * f(b, p)).sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for m in 2..=n {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * z * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}
