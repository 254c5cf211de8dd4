//! Elementary symmetric functions of self-adjoint endomorphisms.
//!
//! All endomorphisms are stored in an orthonormal frame, so "symmetric in the
//! metric" is plain matrix symmetry. `sigma_k` is evaluated from power traces
//! (Newton's identities) and its matrix derivative from the Cayley-Hamilton
//! style expansion `sum_m (-1)^m sigma_{k-1-m}(A) A^m`; both are exact
//! polynomials in the entries and need no eigen-decomposition.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymError {
    #[error("endomorphism left the Garding cone: sigma_{index} = {value:e}")]
    ConeExit { index: usize, value: f64 },
    #[error("curvature order {k} is outside 0..={n}")]
    Order { k: usize, n: usize },
    #[error("polarization needs {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
}

/// Binomial coefficient as a float; zero when `k > n`.
pub fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Symmetric endomorphism of the tangent space at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct SymEndo {
    m: DMatrix<f64>,
}

impl SymEndo {
    /// Symmetrizes the input.
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "endomorphism must be square");
        let sym = (&m + m.transpose()) * 0.5;
        SymEndo { m: sym }
    }

    pub fn from_2x2(a11: f64, a12: f64, a22: f64) -> Self {
        SymEndo { m: DMatrix::from_row_slice(2, 2, &[a11, a12, a12, a22]) }
    }

    pub fn diag(d: &[f64]) -> Self {
        SymEndo { m: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(d)) }
    }

    pub fn identity(n: usize) -> Self {
        SymEndo { m: DMatrix::identity(n, n) }
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        SymEndo { m: DMatrix::identity(n, n) * c }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn add(&self, other: &SymEndo) -> SymEndo {
        SymEndo { m: &self.m + &other.m }
    }

    pub fn scale(&self, c: f64) -> SymEndo {
        SymEndo { m: &self.m * c }
    }

    /// Frobenius contraction `sum_ij a_ij b_ij`.
    pub fn contract(&self, other: &SymEndo) -> f64 {
        self.m.component_mul(&other.m).sum()
    }

    /// Eigenvalues in ascending order. The 2x2 case uses the closed-form
    /// quadratic.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim();
        if n == 1 {
            return vec![self.m[(0, 0)]];
        }
        if n == 2 {
            let (a, b, d) = (self.m[(0, 0)], self.m[(0, 1)], self.m[(1, 1)]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            return vec![mean - rad, mean + rad];
        }
        let mut ev: Vec<f64> = self.m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|x, y| x.total_cmp(y));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// All of `sigma_0 ..= sigma_k`.
    pub fn sigmas(&self, k: usize) -> Vec<f64> {
        let n = self.dim();
        let mut e = vec![0.0; k + 1];
        e[0] = 1.0;
        if k == 0 {
            return e;
        }
        if n == 2 {
            e[1] = self.trace();
            if k >= 2 {
                e[2] = self.m[(0, 0)] * self.m[(1, 1)] - self.m[(0, 1)] * self.m[(1, 0)];
            }
            return e;
        }
        let top = k.min(n);
        let mut traces = Vec::with_capacity(top);
        let mut pow = self.m.clone();
        for i in 0..top {
            if i > 0 {
                pow = &pow * &self.m;
            }
            traces.push(pow.trace());
        }
        for m in 1..=top {
            let mut acc = 0.0;
            for i in 1..=m {
                let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                acc += sign * e[m - i] * traces[i - 1];
            }
            e[m] = acc / m as f64;
        }
        e
    }
}

/// k-th elementary symmetric function of the eigenvalues; `sigma_0 = 1`,
/// and zero for `k > n`.
pub fn sigma_k(a: &SymEndo, k: usize) -> f64 {
    a.sigmas(k)[k]
}

/// Matrix derivative `d sigma_k / d a_ij`.
pub fn sigma_k_grad(a: &SymEndo, k: usize) -> SymEndo {
    let n = a.dim();
    if k == 0 {
        return SymEndo { m: DMatrix::zeros(n, n) };
    }
    let e = a.sigmas(k);
    let mut acc = DMatrix::zeros(n, n);
    let mut pow = DMatrix::identity(n, n);
    for m in 0..k {
        if m > 0 {
            pow = &pow * a.matrix();
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        acc += &pow * (sign * e[k - 1 - m]);
    }
    SymEndo::from_matrix(acc)
}

/// Checks `sigma_j(A) > margin` for `j = 1..=k`.
pub fn check_cone(a: &SymEndo, k: usize, margin: f64) -> Result<(), SymError> {
    let e = a.sigmas(k);
    for (j, &v) in e.iter().enumerate().skip(1) {
        if v <= margin {
            return Err(SymError::ConeExit { index: j, value: v });
        }
    }
    Ok(())
}

/// `F = sigma_k^{1/k}` and its derivative `F^{ij}`; `A` must lie in the
/// Garding cone.
pub fn f_and_grad(a: &SymEndo, k: usize, margin: f64) -> Result<(f64, SymEndo), SymError> {
    if k == 0 || k > a.dim() {
        return Err(SymError::Order { k, n: a.dim() });
    }
    check_cone(a, k, margin)?;
    let sk = sigma_k(a, k);
    let kf = k as f64;
    let f = sk.powf(1.0 / kf);
    let coef = sk.powf(1.0 / kf - 1.0) / kf;
    Ok((f, sigma_k_grad(a, k).scale(coef)))
}

/// Symmetric multilinear polarization `Q_k` with `Q_k(A, ..., A) =
/// sigma_k(A) / C(n, k)`, by inclusion-exclusion over subset sums.
pub fn polarize_qk(args: &[&SymEndo], k: usize) -> Result<f64, SymError> {
    if args.len() != k {
        return Err(SymError::Arity { expected: k, got: args.len() });
    }
    if k == 0 {
        return Ok(1.0);
    }
    let n = args[0].dim();
    if k > n {
        return Err(SymError::Order { k, n });
    }
    let mut total = 0.0;
    for mask in 1u32..(1u32 << k) {
        let mut sum = DMatrix::zeros(n, n);
        for (i, a) in args.iter().enumerate() {
            if mask & (1 << i) != 0 {
                sum += a.matrix();
            }
        }
        let size = mask.count_ones() as usize;
        let sign = if (k - size) % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * sigma_k(&SymEndo { m: sum }, k);
    }
    Ok(total / (binom(n, k) * factorial(k)))
}

/// Outcome of one Newton-Maclaurin comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct MaclaurinCheck {
    /// `(sigma_k / C(n,k))^{1/k}`
    pub lhs: f64,
    /// `(sigma_{k-1} / C(n,k-1))^{1/(k-1)}`
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Compares consecutive normalized means `(sigma_k/C(n,k))^{1/k} <=
/// (sigma_{k-1}/C(n,k-1))^{1/(k-1)}`. Needs `2 <= k <= n`.
pub fn newton_maclaurin_check(a: &SymEndo, k: usize) -> Result<MaclaurinCheck, SymError> {
    let n = a.dim();
    if k < 2 || k > n {
        return Err(SymError::Order { k, n });
    }
    let e = a.sigmas(k);
    let lhs = (e[k] / binom(n, k)).powf(1.0 / k as f64);
    let rhs = (e[k - 1] / binom(n, k - 1)).powf(1.0 / (k - 1) as f64);
    let margin = rhs - lhs;
    // relative slack for rounding at equality
    let pass = margin >= -1e-12 * rhs.abs().max(1.0);
    Ok(MaclaurinCheck { lhs, rhs, margin, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymEndo {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        SymEndo::from_matrix(m)
    }

    /// Random element of Gamma_n (positive definite), so it lies in every Gamma_k.
    fn random_positive(rng: &mut ChaCha8Rng, n: usize) -> SymEndo {
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let m = &b * b.transpose() + DMatrix::identity(n, n) * 0.05;
        SymEndo::from_matrix(m)
    }

    #[test]
    fn sigma_examples() {
        let id = SymEndo::identity(2);
        assert_eq!(sigma_k(&id, 0), 1.0);
        assert_eq!(sigma_k(&id, 1), 2.0);
        assert_eq!(sigma_k(&id, 2), 1.0);
        assert_eq!(sigma_k(&SymEndo::diag(&[3.0, 5.0]), 2), 15.0);
        assert_eq!(sigma_k(&id, 3), 0.0);
    }

    #[test]
    fn sigma_matches_eigenvalue_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=5 {
            let a = random_sym(&mut rng, n);
            let ev = a.eigenvalues();
            for k in 0..=n {
                // brute force over k-subsets of eigenvalues
                let mut brute = 0.0;
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize == k {
                        brute += (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ev[i]).product::<f64>();
                    }
                }
                assert!((sigma_k(&a, k) - brute).abs() < 1e-10, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn grad_examples() {
        let id = SymEndo::identity(2);
        assert_eq!(sigma_k_grad(&id, 2), id);
        assert_eq!(sigma_k_grad(&SymEndo::diag(&[3.0, 5.0]), 1), id);
    }

    #[test]
    fn grad_homogeneity_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=4 {
            for _ in 0..20 {
                let a = random_sym(&mut rng, n);
                for k in 1..=n {
                    let lhs = sigma_k_grad(&a, k).contract(&a);
                    let rhs = k as f64 * sigma_k(&a, k);
                    assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "n={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn grad_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eps = 1e-5;
        for n in 2..=4 {
            let a = random_sym(&mut rng, n);
            for k in 1..=n {
                let g = sigma_k_grad(&a, k);
                for i in 0..n {
                    for j in i..n {
                        // symmetric perturbation E_ij + E_ji, directional derivative = g_ij + g_ji
                        let mut e = DMatrix::zeros(n, n);
                        e[(i, j)] += 1.0;
                        e[(j, i)] += 1.0;
                        if i == j {
                            e[(i, i)] = 1.0;
                        }
                        let ap = SymEndo { m: a.matrix() + &e * eps };
                        let am = SymEndo { m: a.matrix() - &e * eps };
                        let fd = (sigma_k(&ap, k) - sigma_k(&am, k)) / (2.0 * eps);
                        let exact = SymEndo { m: e }.contract(&g);
                        assert!((fd - exact).abs() < 1e-8, "n={n} k={k} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn f_is_homogeneous_and_grad_positive_definite() {
        let (f, _) = f_and_grad(&SymEndo::identity(2), 2, 1e-10).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
        let c = 2.5;
        for k in 1..=3 {
            let (f, _) = f_and_grad(&SymEndo::scaled_identity(3, c), k, 1e-10).unwrap();
            assert!((f - c * binom(3, k).powf(1.0 / k as f64)).abs() < 1e-13);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_positive(&mut rng, 3);
            for k in 1..=3 {
                let (f, g) = f_and_grad(&a, k, 1e-10).unwrap();
                assert!((g.contract(&a) - f).abs() < 1e-12 * f.max(1.0));
                assert!(g.min_eigenvalue() > 0.0);
                assert!(g.trace() >= binom(3, k).powf(1.0 / k as f64) - 1e-12);
            }
        }
    }

    #[test]
    fn cone_exit_is_reported() {
        let a = SymEndo::diag(&[1.0, -2.0]);
        match f_and_grad(&a, 2, 1e-10) {
            Err(SymError::ConeExit { index: 1, value }) => assert_eq!(value, -1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn f_is_concave_on_cone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = random_positive(&mut rng, 3);
            let b = random_positive(&mut rng, 3);
            let t: f64 = rng.gen_range(0.0..1.0);
            for k in 1..=3 {
                let mix = a.scale(t).add(&b.scale(1.0 - t));
                let fm = f_and_grad(&mix, k, 0.0).unwrap().0;
                let fa = f_and_grad(&a, k, 0.0).unwrap().0;
                let fb = f_and_grad(&b, k, 0.0).unwrap().0;
                assert!(fm >= t * fa + (1.0 - t) * fb - 1e-12);
            }
        }
    }

    #[test]
    fn polarization_examples() {
        let id = SymEndo::identity(2);
        assert!((polarize_qk(&[&id, &id], 2).unwrap() - 1.0).abs() < 1e-15);
        let a = SymEndo::diag(&[3.0, 5.0]);
        assert!((polarize_qk(&[&a, &a], 2).unwrap() - 15.0).abs() < 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = random_sym(&mut rng, 2);
            let b = random_sym(&mut rng, 2);
            let det = |m: &SymEndo| sigma_k(m, 2);
            let mixed = 0.5 * (det(&a.add(&b)) - det(&a) - det(&b));
            assert!((polarize_qk(&[&a, &b], 2).unwrap() - mixed).abs() < 1e-13);
        }
    }

    #[test]
    fn polarization_symmetric_and_multilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4;
        let k = 3;
        let a: Vec<SymEndo> = (0..k).map(|_| random_sym(&mut rng, n)).collect();
        let q = polarize_qk(&[&a[0], &a[1], &a[2]], k).unwrap();
        let qp = polarize_qk(&[&a[2], &a[0], &a[1]], k).unwrap();
        assert!((q - qp).abs() < 1e-12);
        let b = random_sym(&mut rng, n);
        let (s, t) = (0.7, -1.3);
        let comb = a[0].scale(s).add(&b.scale(t));
        let lhs = polarize_qk(&[&comb, &a[1], &a[2]], k).unwrap();
        let rhs = s * q + t * polarize_qk(&[&b, &a[1], &a[2]], k).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(matches!(polarize_qk(&[&a[0]], 2), Err(SymError::Arity { .. })));
    }

    #[test]
    fn maclaurin_examples() {
        let c = newton_maclaurin_check(&SymEndo::identity(3), 2).unwrap();
        assert!(c.pass && c.margin.abs() < 1e-14);
        let c = newton_maclaurin_check(&SymEndo::diag(&[1.0, 4.0]), 2).unwrap();
        assert!((c.lhs - 2.0).abs() < 1e-15 && (c.rhs - 2.5).abs() < 1e-15 && c.pass);
    }

    #[test]
    fn maclaurin_holds_on_random_cone_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut count = 0;
        while count < 10_000 {
            let n = rng.gen_range(2..=4);
            let a = random_sym(&mut rng, n).add(&SymEndo::scaled_identity(n, rng.gen_range(0.0..2.0)));
            let k = rng.gen_range(2..=n);
            if check_cone(&a, k, 0.0).is_err() {
                continue;
            }
            count += 1;
            assert!(newton_maclaurin_check(&a, k).unwrap().pass);
        }
    }
}
