//! Banded LU factorization with partial pivoting.
//!
//! Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl` columns on
//! the right absorb fill from row interchanges.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandError {
    #[error("matrix is singular to working precision at column {0}")]
    Singular(usize),
    #[error("entry ({row}, {col}) outside the band (kl = {kl}, ku = {ku})")]
    OutsideBand { row: usize, col: usize, kl: usize, ku: usize },
}

#[derive(Clone, Debug)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    fn slot(&self, row: usize, col: usize) -> Option<usize> {
        if col + self.kl < row || col > row + self.kl + self.ku || col >= self.n {
            return None;
        }
        Some(row * self.width + (col + self.kl - row))
    }

    pub fn add(&mut self, row: usize, col: usize, v: f64) -> Result<(), BandError> {
        if col > row + self.ku {
            return Err(BandError::OutsideBand { row, col, kl: self.kl, ku: self.ku });
        }
        match self.slot(row, col) {
            Some(s) => {
                self.data[s] += v;
                Ok(())
            }
            None => Err(BandError::OutsideBand { row, col, kl: self.kl, ku: self.ku }),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.slot(row, col).map_or(0.0, |s| self.data[s])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.kl + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Solves `A x = b` in place, consuming the matrix.
    pub fn solve(mut self, b: &mut [f64]) -> Result<(), BandError> {
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku;
        let w = self.width;
        let mut scratch = vec![0.0; w];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.data[k * w + kl].abs();
            for r in k + 1..=last {
                let v = self.data[r * w + (k + kl - r)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(BandError::Singular(k));
            }
            let cend = (k + reach).min(n - 1);
            if piv != k {
                for c in k..=cend {
                    let a = k * w + (c + kl - k);
                    let bb = piv * w + (c + kl - piv);
                    self.data.swap(a, bb);
                }
                b.swap(k, piv);
            }
            let pivot = self.data[k * w + kl];
            let span = cend - k;
            scratch[..=span].copy_from_slice(&self.data[k * w + kl..=k * w + kl + span]);
            for r in k + 1..=last {
                let base = r * w + kl - r;
                let f = self.data[base + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                self.data[base + k] = 0.0;
                let row = &mut self.data[base + k + 1..=base + cend];
                for (x, u) in row.iter_mut().zip(&scratch[1..=span]) {
                    *x -= f * u;
                }
                b[r] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let cend = (k + reach).min(n - 1);
            let base = k * w + kl - k;
            let mut acc = b[k];
            for c in k + 1..=cend {
                acc -= self.data[base + c] * b[c];
            }
            b[k] = acc / self.data[base + k];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_dense_solve_with_pivoting() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (n, kl, ku) = (40, 5, 3);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // small diagonal forces row swaps
                let v = if i == j { 0.01 * rng.gen::<f64>() } else { rng.gen_range(-1.0..1.0) };
                band.add(i, j, v).unwrap();
                dense[(i, j)] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let reference = dense.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let mut x = b.clone();
        band.clone().solve(&mut x).unwrap();
        for i in 0..n {
            assert!((x[i] - reference[i]).abs() < 1e-9 * reference.amax().max(1.0));
        }
        let r = band.matvec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_out_of_band_and_singular() {
        let mut m = BandMatrix::zeros(5, 1, 1);
        assert!(m.add(0, 3, 1.0).is_err());
        assert!(m.add(4, 1, 1.0).is_err());
        let mut b = vec![1.0; 5];
        assert_eq!(m.solve(&mut b), Err(BandError::Singular(0)));
    }
}
