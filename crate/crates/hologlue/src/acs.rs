//! Almost-complex structures on flat charts of the target.
//!
//! Structures are matrix fields `J(x)` with `J(x)^2 = -Id`. Perturbations
//! are built by conjugation `J = G J_base G^{-1}`, which preserves the
//! square identity exactly instead of approximately. The flattening
//! construction reparametrizes the evaluation point radially so the
//! structure becomes constant near a chosen chart origin.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Standard structure on interleaved coordinates `(Re z_1, Im z_1, ...)`:
/// block-diagonal copies of `[[0,-1],[1,0]]`.
pub fn j0_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(2 * k, 2 * k + 1)] = -1.0;
        j[(2 * k + 1, 2 * k)] = 1.0;
    }
    j
}

#[derive(Debug, Clone)]
enum Kind {
    Standard,
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
        base: Box<AlmostComplexStructure>,
        a: DMatrix<f64>,
    },
    Flattened {
        base: Box<AlmostComplexStructure>,
        r: f64,
        kappa: f64,
    },
}

/// A smooth field of matrices with `J(x)^2 = -Id` and derivative access.
#[derive(Debug, Clone)]
pub struct AlmostComplexStructure {
    pub dim_half: usize,
    pub class_bound: f64,
    kind: Kind,
}

fn bump_profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        let t = 1.0 - s * s;
        t * t * t
    }
}

fn bump_profile_deriv(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        let t = 1.0 - s * s;
        -6.0 * s * t * t
    }
}

impl AlmostComplexStructure {
    pub fn dim(&self) -> usize {
        2 * self.dim_half
    }

    /// Evaluate `J(x)`.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            Kind::Standard => j0_matrix(self.dim_half),
            Kind::Bump {
                center,
                radius,
                amplitude,
                base,
                a,
            } => {
                let s = dist(x, center) / radius;
                let jb = base.eval(x);
                if s >= 1.0 {
                    return jb;
                }
                let g = DMatrix::identity(self.dim(), self.dim())
                    + a * (amplitude * bump_profile(s));
                let ginv = g.clone().try_inverse().expect("conjugator invertible");
                &g * jb * ginv
            }
            Kind::Flattened { base, r, kappa } => {
                let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let inner = r * (1.0 - r.powf(*kappa));
                if rho <= inner {
                    j0_matrix(self.dim_half)
                } else if rho >= *r {
                    base.eval(x)
                } else {
                    let beta = (rho / inner).ln() / (-(1.0 - r.powf(*kappa)).ln());
                    let y: Vec<f64> = x.iter().map(|v| v * beta).collect();
                    base.eval(&y)
                }
            }
        }
    }

    /// Directional derivative `(grad J)(x)[v]`.
    pub fn deriv(&self, x: &[f64], v: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            Kind::Standard => DMatrix::zeros(self.dim(), self.dim()),
            Kind::Bump {
                center,
                radius,
                amplitude,
                base,
                a,
            } => {
                let d = self.dim();
                let rho = dist(x, center);
                let s = rho / radius;
                let jb = base.eval(x);
                let djb = base.deriv(x, v);
                if s >= 1.0 || rho == 0.0 {
                    return djb;
                }
                let phi = bump_profile(s);
                let dir: f64 = x
                    .iter()
                    .zip(center.iter())
                    .zip(v.iter())
                    .map(|((xi, ci), vi)| (xi - ci) * vi)
                    .sum::<f64>()
                    / (radius * rho);
                let dphi = bump_profile_deriv(s) * dir;
                let g = DMatrix::identity(d, d) + a * (amplitude * phi);
                let ginv = g.clone().try_inverse().expect("conjugator invertible");
                let dg = a * (amplitude * dphi);
                // d(G Jb G^-1) = dG Jb G^-1 + G dJb G^-1 - G Jb G^-1 dG G^-1
                let j = &g * &jb * &ginv;
                &dg * jb * &ginv + &g * djb * &ginv - j * &dg * &ginv
            }
            Kind::Flattened { base, r, kappa } => {
                let d = self.dim();
                let rho = x.iter().map(|q| q * q).sum::<f64>().sqrt();
                let inner = r * (1.0 - r.powf(*kappa));
                if rho <= inner {
                    DMatrix::zeros(d, d)
                } else if rho >= *r {
                    base.deriv(x, v)
                } else {
                    let denom = -(1.0 - r.powf(*kappa)).ln();
                    let beta = (rho / inner).ln() / denom;
                    let dbeta_drho = 1.0 / (rho * denom);
                    let radial: f64 =
                        x.iter().zip(v.iter()).map(|(xi, vi)| xi * vi).sum::<f64>() / rho;
                    let y: Vec<f64> = x.iter().map(|q| q * beta).collect();
                    // d/dt J(beta(|x+tv|)(x+tv)) = (grad J)_y [beta v + beta' (x.v/|x|) x]
                    let w: Vec<f64> = x
                        .iter()
                        .zip(v.iter())
                        .map(|(xi, vi)| beta * vi + dbeta_drho * radial * xi)
                        .collect();
                    base.deriv(&y, &w)
                }
            }
        }
    }

    /// Largest `||J(x)^2 + Id||_F` over seeded random probes in a box.
    pub fn square_defect(&self, n_probes: usize, box_radius: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let id = DMatrix::<f64>::identity(d, d);
        let mut worst = 0.0_f64;
        for _ in 0..n_probes {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-box_radius..box_radius)).collect();
            let j = self.eval(&x);
            let defect = (&j * &j + &id).norm();
            worst = worst.max(defect);
        }
        worst
    }
}

fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter()
        .zip(c.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// The constant standard structure; derivative identically zero.
pub fn standard_structure(n: usize) -> Result<AlmostComplexStructure> {
    if n == 0 {
        return Err(Error::invalid("dimension n must be positive"));
    }
    Ok(AlmostComplexStructure {
        dim_half: n,
        class_bound: 1.0,
        kind: Kind::Standard,
    })
}

/// Compactly supported conjugation perturbation: differs from `base` only
/// inside the ball of the given radius around `center`, and squares to
/// `-Id` everywhere by construction.
pub fn bump_perturbation(
    base: &AlmostComplexStructure,
    center: &[f64],
    radius: f64,
    amplitude: f64,
    seed: u64,
) -> Result<AlmostComplexStructure> {
    if radius <= 0.0 {
        return Err(Error::invalid("bump radius must be positive"));
    }
    if center.len() != base.dim() {
        return Err(Error::invalid("bump center has wrong dimension"));
    }
    let d = base.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    // normalize so `amplitude` is the spectral size of the perturbation
    let scale = a.norm();
    if scale > 0.0 {
        a /= scale;
    }
    if amplitude.abs() >= 0.9 {
        return Err(Error::invalid(format!(
            "amplitude {amplitude} loses invertibility of the conjugator"
        )));
    }
    Ok(AlmostComplexStructure {
        dim_half: base.dim_half,
        class_bound: base.class_bound + 4.0 * amplitude.abs() * (1.0 + 6.0 / radius),
        kind: Kind::Bump {
            center: center.to_vec(),
            radius,
            amplitude,
            base: Box::new(base.clone()),
            a,
        },
    })
}

/// Radially interpolated structure that is exactly standard inside
/// `|w| < R (1 - R^kappa)` and agrees with `base` outside `|w| > R`.
/// Requires `base(0) = J_0` (the chart convention at the flattening point).
pub fn flatten_near_point(
    base: &AlmostComplexStructure,
    r: f64,
    kappa: f64,
) -> Result<AlmostComplexStructure> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("flattening radius must lie in (0,1)"));
    }
    if kappa <= 0.0 {
        return Err(Error::invalid("kappa must be positive"));
    }
    let origin = vec![0.0; base.dim()];
    let at0 = base.eval(&origin);
    if (&at0 - j0_matrix(base.dim_half)).norm() > 1e-10 {
        return Err(Error::invalid(
            "flattening requires J(0) = J_0 in the chosen chart",
        ));
    }
    let denom = (1.0 - r.powf(kappa)).ln().abs();
    Ok(AlmostComplexStructure {
        dim_half: base.dim_half,
        class_bound: base.class_bound * (1.0 + 1.0 / denom),
        kind: Kind::Flattened {
            base: Box::new(base.clone()),
            r,
            kappa,
        },
    })
}

/// Default flattening interpolation exponent for a given Lebesgue exponent.
pub fn default_kappa(p: f64) -> f64 {
    1.0 / (p - 1.0)
}

/// Serializable structure specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcsSpec {
    Standard {
        n: usize,
    },
    Bump {
        n: usize,
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
        seed: u64,
    },
    Flattened {
        #[serde(rename = "base")]
        base_spec: Box<AcsSpec>,
        r: f64,
        kappa: f64,
    },
}

impl AcsSpec {
    pub fn build(&self) -> Result<AlmostComplexStructure> {
        match self {
            AcsSpec::Standard { n } => standard_structure(*n),
            AcsSpec::Bump {
                n,
                center,
                radius,
                amplitude,
                seed,
            } => {
                let base = standard_structure(*n)?;
                if center.len() != 2 * n {
                    return Err(Error::Config("bump center dimension mismatch".into()));
                }
                bump_perturbation(&base, center, *radius, *amplitude, *seed)
            }
            AcsSpec::Flattened { base_spec, r, kappa } => {
                let base = base_spec.build()?;
                flatten_near_point(&base, *r, *kappa)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_is_constant_and_squares_to_minus_id() {
        let j = standard_structure(2).unwrap();
        assert!(standard_structure(0).is_err());
        let x = [1.0, 2.0, 3.0, 4.0];
        let m = j.eval(&x);
        assert_eq!(m, j0_matrix(2));
        assert!(j.square_defect(50, 2.0, 3) < 1e-14);
        let v = [0.3, -0.4, 0.5, 0.1];
        assert_eq!(j.deriv(&x, &v), DMatrix::zeros(4, 4));
    }

    #[test]
    fn zero_amplitude_bump_equals_base() {
        let base = standard_structure(2).unwrap();
        let j = bump_perturbation(&base, &[0.5, 0.0, 0.0, 0.0], 0.2, 0.0, 7).unwrap();
        let x = [0.5, 0.05, 0.0, 0.0];
        assert!((j.eval(&x) - base.eval(&x)).norm() < 1e-15);
    }

    #[test]
    fn bump_squares_to_minus_id_and_has_compact_support() {
        let base = standard_structure(2).unwrap();
        let j = bump_perturbation(&base, &[0.4, 0.0, 0.1, 0.0], 0.25, 0.05, 11).unwrap();
        assert!(j.square_defect(100, 1.0, 5) < 1e-12);
        // outside the support ball the field equals the base exactly
        let far = [2.0, 0.0, 0.0, 0.0];
        assert!((j.eval(&far) - base.eval(&far)).norm() == 0.0);
        // inside it differs
        let inside = [0.4, 0.0, 0.1, 0.0];
        assert!((j.eval(&inside) - base.eval(&inside)).norm() > 1e-4);
        // too large amplitude rejected
        assert!(bump_perturbation(&base, &[0.4, 0.0, 0.1, 0.0], 0.25, 0.95, 1).is_err());
    }

    #[test]
    fn bump_deriv_matches_finite_differences() {
        let base = standard_structure(2).unwrap();
        let j = bump_perturbation(&base, &[0.4, 0.0, 0.1, 0.0], 0.25, 0.05, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.2..0.6)).collect();
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-5;
            let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let fd = (j.eval(&xp) - j.eval(&xm)) / (2.0 * h);
            let an = j.deriv(&x, &v);
            assert!((fd - an).norm() < 1e-7, "analytic derivative mismatch");
        }
    }

    #[test]
    fn flatten_plateau_outer_region_and_idempotence() {
        let base = standard_structure(2).unwrap();
        let bumped = bump_perturbation(&base, &[0.15, 0.0, 0.0, 0.0], 0.1, 0.05, 3).unwrap();
        let flat = flatten_near_point(&bumped, 0.1, 1.0).unwrap();
        // inner plateau: R/2 < R(1-R)
        let w = [0.05, 0.0, 0.0, 0.0];
        assert!((flat.eval(&w) - j0_matrix(2)).norm() < 1e-14);
        // outer region: |w| = 2R
        let far = [0.2, 0.0, 0.0, 0.0];
        assert!((flat.eval(&far) - bumped.eval(&far)).norm() < 1e-15);
        // flattening the standard structure changes nothing
        let flat_std = flatten_near_point(&base, 0.1, 1.0).unwrap();
        for x in [[0.01, 0.0, 0.0, 0.0], [0.095, 0.02, 0.0, 0.0], [0.5, 0.1, 0.2, 0.0]] {
            assert!((flat_std.eval(&x) - j0_matrix(2)).norm() < 1e-14);
        }
        assert!(flat.square_defect(100, 0.5, 9) < 1e-12);
        // parameter validation
        assert!(flatten_near_point(&base, 1.5, 1.0).is_err());
        assert!(flatten_near_point(&base, 0.1, 0.0).is_err());
    }

    #[test]
    fn flatten_c0_distance_shrinks_with_radius() {
        let base = standard_structure(2).unwrap();
        let bumped = bump_perturbation(&base, &[0.15, 0.0, 0.0, 0.0], 0.1, 0.05, 3).unwrap();
        let mut prev = f64::INFINITY;
        for r in [0.2, 0.1, 0.05] {
            let flat = flatten_near_point(&bumped, r, 1.0).unwrap();
            // sample the C0 distance on a radial fan
            let mut dist = 0.0_f64;
            for i in 1..60 {
                let rho = 0.3 * i as f64 / 60.0;
                for k in 0..8 {
                    let ang = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
                    let x = [rho * ang.cos(), rho * ang.sin(), 0.0, 0.0];
                    dist = dist.max((flat.eval(&x) - bumped.eval(&x)).norm());
                }
            }
            assert!(dist <= prev + 1e-12, "C0 distance not monotone: {dist} > {prev}");
            prev = dist;
        }
        // and the sampled bound from the construction
        let r = 0.2;
        let flat = flatten_near_point(&bumped, r, 1.0).unwrap();
        let mut lhs = 0.0_f64;
        let mut sup_inside = 0.0_f64;
        for i in 1..80 {
            let rho = r * i as f64 / 80.0;
            let x = [rho, 0.0, 0.0, 0.0];
            lhs = lhs.max((flat.eval(&x) - bumped.eval(&x)).norm());
            sup_inside = sup_inside.max((bumped.eval(&x) - j0_matrix(2)).norm());
        }
        assert!(lhs <= 2.0 * sup_inside + 1e-12);
    }

    #[test]
    fn flatten_deriv_matches_finite_differences() {
        let base = standard_structure(2).unwrap();
        let bumped = bump_perturbation(&base, &[0.15, 0.0, 0.0, 0.0], 0.1, 0.04, 5).unwrap();
        let flat = flatten_near_point(&bumped, 0.12, 2.0 / 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let rho = rng.gen_range(0.02..0.3);
            let ang = rng.gen_range(0.0..(2.0 * std::f64::consts::PI));
            let x = [rho * ang.cos(), rho * ang.sin(), 0.01, 0.0];
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let fd = (flat.eval(&xp) - flat.eval(&xm)) / (2.0 * h);
            let an = flat.deriv(&x, &v);
            assert!((fd - an).norm() < 1e-6, "flatten derivative mismatch");
        }
    }

    #[test]
    fn spec_roundtrip() {
        let spec = AcsSpec::Bump {
            n: 2,
            center: vec![0.4, 0.0, 0.1, 0.0],
            radius: 0.25,
            amplitude: 0.05,
            seed: 11,
        };
        let s = serde_json::to_string(&spec).unwrap();
        let back: AcsSpec = serde_json::from_str(&s).unwrap();
        let j = back.build().unwrap();
        assert_eq!(j.dim(), 4);
    }
}
