//! Finite-difference weights on arbitrary nodes (Fornberg's recursion).

/// Weights `w[m][j]` such that `sum_j w[m][j] f(x_j)` approximates the `m`-th
/// derivative of `f` at `z`, for `m = 0..=max_order`.
pub fn fornberg(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Weights for a single derivative order on offsets measured in units of `h`.
pub fn weights(offsets: &[f64], order: usize, h: f64) -> Vec<f64> {
    let w = fornberg(0.0, offsets, order);
    let scale = h.powi(order as i32);
    w[order].iter().map(|v| v / scale).collect()
}

/// Lagrange interpolation weights at `z` (order-zero Fornberg weights).
pub fn interpolation(z: f64, x: &[f64]) -> Vec<f64> {
    fornberg(z, x, 0).swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_three_point() {
        let w = fornberg(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn one_sided_three_point() {
        let w = weights(&[0.0, -1.0, -2.0], 1, 1.0);
        for (a, b) in w.iter().zip([1.5, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn uneven_nodes_exact_on_quadratics() {
        let x = [-2.0, -1.0, 0.0, 0.5];
        let w = fornberg(0.0, &x, 2);
        let f = |t: f64| 3.0 * t * t * t - t * t + 2.0 * t + 1.0;
        let d1: f64 = w[1].iter().zip(&x).map(|(w, x)| w * f(*x)).sum();
        let d2: f64 = w[2].iter().zip(&x).map(|(w, x)| w * f(*x)).sum();
        assert!((d1 - 2.0).abs() < 1e-13);
        assert!((d2 + 2.0).abs() < 1e-13);
    }

    #[test]
    fn interpolation_is_partition_of_unity() {
        let w = interpolation(0.3, &[-1.0, 0.0, 1.0, 2.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let v: f64 = w.iter().zip([-1.0, 0.0, 1.0, 2.0]).map(|(w, x)| w * x * x * x).sum();
        assert!((v - 0.027).abs() < 1e-14);
    }
}
