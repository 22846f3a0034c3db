//! Finite-difference and spectral differentiation primitives.
//!
//! Radial directions use Fornberg-style interpolation/differentiation
//! weights on (subsets of) uniform log-radius knots; the angular direction
//! uses the exact periodic spectral differentiation matrix.

use nalgebra::DMatrix;

/// Fornberg weights: coefficients `w[i]` such that
/// `sum_i w[i] f(xs[i])` approximates the `der`-th derivative of `f` at `x0`
/// with the maximal order allowed by the stencil.
pub fn fd_weights(x0: f64, xs: &[f64], der: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(der < n, "stencil too short for requested derivative");
    // B. Fornberg, "Generation of finite difference formulas on arbitrarily
    // spaced grids", recursion over stencil points and derivative orders.
    let mut c = vec![vec![0.0; der + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(der);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[der]).collect()
}

/// Uniform-grid stencil for the first derivative at knot `i` of `n` knots
/// spaced `h` apart, 4th order (5-point), one-sided near the edges.
/// Returns `(offsets, weights)` with offsets relative to `i`.
pub fn d1_knot_stencil(i: usize, n: usize, h: f64) -> (Vec<isize>, Vec<f64>) {
    assert!(n >= 5, "need at least 5 knots");
    let lo = (i as isize - 2).clamp(0, n as isize - 5);
    let offsets: Vec<isize> = (lo..lo + 5).map(|k| k - i as isize).collect();
    let xs: Vec<f64> = offsets.iter().map(|&o| o as f64 * h).collect();
    let w = fd_weights(0.0, &xs, 1);
    (offsets, w)
}

/// Periodic spectral differentiation matrix for `m` (even) uniformly spaced
/// angular nodes over a period of `2*pi`. Exact on trigonometric
/// polynomials below the Nyquist mode.
pub fn spectral_diff_matrix(m: usize) -> DMatrix<f64> {
    assert!(m >= 4 && m % 2 == 0, "angular node count must be even, >= 4");
    let mut d = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in 0..m {
            if j != k {
                let diff = j as isize - k as isize;
                let sign = if diff.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let angle = std::f64::consts::PI * diff as f64 / m as f64;
                d[(j, k)] = 0.5 * sign / angle.tan();
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fornberg_reproduces_centered_first_derivative() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let w = fd_weights(0.0, &xs, 1);
        let expect = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn fornberg_staggered_midpoint_derivative() {
        let xs = [-1.5, -0.5, 0.5, 1.5];
        let w = fd_weights(0.0, &xs, 1);
        let expect = [1.0 / 24.0, -9.0 / 8.0, 9.0 / 8.0, -1.0 / 24.0];
        for (a, b) in w.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn fornberg_interpolation_weights_sum_to_one() {
        let xs = [-1.5, -0.5, 0.5, 1.5];
        let w = fd_weights(0.0, &xs, 0);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // quartic-free: exact on cubics
        let f = |x: f64| 1.0 + 2.0 * x - 0.5 * x.powi(2) + 0.25 * x.powi(3);
        let v: f64 = xs.iter().zip(&w).map(|(x, c)| c * f(*x)).sum();
        assert_abs_diff_eq!(v, f(0.0), epsilon = 1e-12);
    }

    #[test]
    fn spectral_matrix_differentiates_low_modes_exactly() {
        let m = 12;
        let d = spectral_diff_matrix(m);
        for mode in 1..=4_usize {
            let vals: Vec<f64> = (0..m)
                .map(|j| (mode as f64 * 2.0 * std::f64::consts::PI * j as f64 / m as f64).sin())
                .collect();
            for j in 0..m {
                let got: f64 = (0..m).map(|k| d[(j, k)] * vals[k]).sum();
                let theta = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                let expect = mode as f64 * (mode as f64 * theta).cos();
                assert_abs_diff_eq!(got, expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn one_sided_knot_stencil_is_fourth_order() {
        let h = 0.1;
        let f = |x: f64| (1.3 * x).exp();
        for i in [0usize, 1, 5, 9, 10] {
            let (off, w) = d1_knot_stencil(i, 11, h);
            let x0 = i as f64 * h;
            let got: f64 = off
                .iter()
                .zip(&w)
                .map(|(&o, c)| c * f(x0 + o as f64 * h))
                .sum();
            let expect = 1.3 * f(x0);
            assert!((got - expect).abs() < 3e-4 * expect.abs());
        }
    }
}
