//! Cyclic chart atlas for triangle chains in the projective plane.
//!
//! Homogeneous setup: lines `X = 0`, `Y = 0`, `Z = 0` with vertices
//! `v_0 = [0:0:1]`, `v_1 = [1:0:0]`, `v_2 = [0:1:0]`. Chart `c` is the
//! affine chart centered at `v_c` whose infinity line is the opposite side,
//! so both edges through `v_c` are plain affine lines through the origin.
//! All transitions between cyclically adjacent charts share one holomorphic
//! formula `(x, y) -> (y/x, 1/x)` on coordinates `R^4 = C^2`
//! (interleaved `(Re x, Im x, Re y, Im y)`).

use crate::error::{Error, Result};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy)]
pub struct ChartCycle {
    pub n: usize,
}

fn cplx(v: &[f64]) -> ((f64, f64), (f64, f64)) {
    ((v[0], v[1]), (v[2], v[3]))
}

fn cdiv(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let d = b.0 * b.0 + b.1 * b.1;
    ((a.0 * b.0 + a.1 * b.1) / d, (a.1 * b.0 - a.0 * b.1) / d)
}

fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cneg(a: (f64, f64)) -> (f64, f64) {
    (-a.0, -a.1)
}

/// Real 4x4 block matrix of the complex 2x2 `[[a, b], [c, d]]`.
fn complex_block(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, 4);
    let put = |m: &mut DMatrix<f64>, r: usize, q: usize, z: (f64, f64)| {
        m[(2 * r, 2 * q)] = z.0;
        m[(2 * r, 2 * q + 1)] = -z.1;
        m[(2 * r + 1, 2 * q)] = z.1;
        m[(2 * r + 1, 2 * q + 1)] = z.0;
    };
    put(&mut m, 0, 0, a);
    put(&mut m, 0, 1, b);
    put(&mut m, 1, 0, c);
    put(&mut m, 1, 1, d);
    m
}

impl ChartCycle {
    pub fn new(n: usize) -> Self {
        ChartCycle { n }
    }

    fn step(&self, from: usize, to: usize) -> Result<i32> {
        if from == to {
            return Ok(0);
        }
        if (from + 1) % self.n == to {
            return Ok(1);
        }
        if (to + 1) % self.n == from {
            return Ok(-1);
        }
        Err(Error::DomainMismatch(format!(
            "non-adjacent chart transition {from} -> {to}"
        )))
    }

    /// Map a target point between adjacent charts.
    pub fn map_point(&self, from: usize, to: usize, v: &[f64]) -> Result<[f64; 4]> {
        let (x, y) = match self.step(from, to)? {
            0 => return Ok([v[0], v[1], v[2], v[3]]),
            1 => {
                // (x, y) -> (y/x, 1/x)
                let (x, y) = cplx(v);
                let u = cdiv(y, x);
                let w = cdiv((1.0, 0.0), x);
                (u, w)
            }
            -1 => {
                // inverse: (u, v) -> (1/v, u/v)
                let (u, w) = cplx(v);
                let x = cdiv((1.0, 0.0), w);
                let y = cdiv(u, w);
                (x, y)
            }
            _ => unreachable!(),
        };
        Ok([x.0, x.1, y.0, y.1])
    }

    /// Real Jacobian of the transition at the given source-chart point.
    pub fn jacobian(&self, from: usize, to: usize, v: &[f64]) -> Result<DMatrix<f64>> {
        match self.step(from, to)? {
            0 => Ok(DMatrix::identity(4, 4)),
            1 => {
                let (x, y) = cplx(v);
                let x2 = cmul(x, x);
                // d(y/x, 1/x)/d(x, y) = [[-y/x^2, 1/x], [-1/x^2, 0]]
                Ok(complex_block(
                    cneg(cdiv(y, x2)),
                    cdiv((1.0, 0.0), x),
                    cneg(cdiv((1.0, 0.0), x2)),
                    (0.0, 0.0),
                ))
            }
            -1 => {
                let (u, w) = cplx(v);
                let w2 = cmul(w, w);
                // d(1/v, u/v)/d(u, v) = [[0, -1/v^2], [1/v, -u/v^2]]
                Ok(complex_block(
                    (0.0, 0.0),
                    cneg(cdiv((1.0, 0.0), w2)),
                    cdiv((1.0, 0.0), w),
                    cneg(cdiv(u, w2)),
                ))
            }
            _ => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_roundtrip() {
        let atlas = ChartCycle::new(3);
        let p = [0.7, 0.2, -0.3, 0.5];
        let q = atlas.map_point(0, 1, &p).unwrap();
        let back = atlas.map_point(1, 0, &q).unwrap();
        for k in 0..4 {
            assert!((back[k] - p[k]).abs() < 1e-13);
        }
        assert!(atlas.map_point(0, 2, &p).is_ok()); // adjacent cyclically (2+1 = 0 mod 3)
    }

    #[test]
    fn edge_curves_transition_correctly() {
        // lower-half representation (z, 0) maps to (0, 1/z) in the next chart
        let atlas = ChartCycle::new(3);
        let z = (0.8, 0.3);
        let p = [z.0, z.1, 0.0, 0.0];
        let q = atlas.map_point(0, 1, &p).unwrap();
        let inv = cdiv((1.0, 0.0), z);
        assert!((q[0]).abs() < 1e-14 && (q[1]).abs() < 1e-14);
        assert!((q[2] - inv.0).abs() < 1e-14 && (q[3] - inv.1).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let atlas = ChartCycle::new(3);
        let p = [0.9, -0.1, 0.4, 0.2];
        for (from, to) in [(0usize, 1usize), (1, 0)] {
            let jac = atlas.jacobian(from, to, &p).unwrap();
            let h = 1e-6;
            for col in 0..4 {
                let mut pp = p;
                let mut pm = p;
                pp[col] += h;
                pm[col] -= h;
                let fp = atlas.map_point(from, to, &pp).unwrap();
                let fm = atlas.map_point(from, to, &pm).unwrap();
                for row in 0..4 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    assert!(
                        (jac[(row, col)] - fd).abs() < 1e-7,
                        "jacobian mismatch {from}->{to} at ({row},{col})"
                    );
                }
            }
        }
    }
}
