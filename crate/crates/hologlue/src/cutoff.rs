//! Logarithmic cutoff functions and their integral identities.
//!
//! The transition profile is linear in `ln|z|`, so its Dirichlet energy has
//! the closed form `2*pi / ln(eps/delta)` which doubles as a quadrature
//! oracle. Gradients are computed analytically; splice-error terms built
//! from these cutoffs are then exact up to quadrature.

use crate::domain::{lp_scalar_raw, DiscreteDomain, NormSpec, SampledField};
use crate::error::{Error, Result};

/// Which plateau carries the value 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `beta_{delta,eps}`: 1 on `|z| < delta`, 0 outside `|z| > eps`.
    InnerOne,
    /// `1 - beta_{delta,eps}`: 0 inside, 1 outside (splice variant).
    OuterOne,
}

/// Radial log-linear cutoff between the circles `|z| = delta` and `|z| = eps`.
#[derive(Debug, Clone, Copy)]
pub struct LogCutoff {
    pub delta: f64,
    pub eps: f64,
    pub orientation: Orientation,
}

impl LogCutoff {
    pub fn new(delta: f64, eps: f64, orientation: Orientation) -> Result<Self> {
        if !(delta > 0.0 && eps > delta) {
            return Err(Error::invalid(format!(
                "cutoff needs 0 < delta < eps, got delta={delta}, eps={eps}"
            )));
        }
        Ok(LogCutoff {
            delta,
            eps,
            orientation,
        })
    }

    pub fn inner_one(delta: f64, eps: f64) -> Result<Self> {
        Self::new(delta, eps, Orientation::InnerOne)
    }

    pub fn outer_one(delta: f64, eps: f64) -> Result<Self> {
        Self::new(delta, eps, Orientation::OuterOne)
    }

    fn log_ratio(&self) -> f64 {
        (self.eps / self.delta).ln()
    }

    /// Value at radius `rho = |z|`.
    pub fn eval_radial(&self, rho: f64) -> f64 {
        let base = if rho <= self.delta {
            1.0
        } else if rho >= self.eps {
            0.0
        } else {
            (self.eps.ln() - rho.ln()) / self.log_ratio()
        };
        match self.orientation {
            Orientation::InnerOne => base,
            Orientation::OuterOne => 1.0 - base,
        }
    }

    /// Radial derivative d(beta)/d(rho); supported in the transition annulus.
    pub fn radial_derivative(&self, rho: f64) -> f64 {
        if rho <= self.delta || rho >= self.eps {
            return 0.0;
        }
        let d = -1.0 / (rho * self.log_ratio());
        match self.orientation {
            Orientation::InnerOne => d,
            Orientation::OuterOne => -d,
        }
    }

    /// Cartesian gradient `(d/ds, d/dt) beta` at `z = (s, t)`.
    pub fn gradient(&self, s: f64, t: f64) -> (f64, f64) {
        let rho = s.hypot(t);
        if rho == 0.0 {
            return (0.0, 0.0);
        }
        let dr = self.radial_derivative(rho);
        (dr * s / rho, dr * t / rho)
    }
}

/// Pointwise cutoff value; rejects the puncture `z = 0`.
pub fn beta_eval(c: &LogCutoff, s: f64, t: f64) -> Result<f64> {
    let rho = s.hypot(t);
    if rho == 0.0 {
        return Err(Error::invalid("cutoff undefined at z = 0"));
    }
    Ok(c.eval_radial(rho))
}

/// Closed-form Dirichlet energy of the transition profile,
/// `int |grad beta|^2 = 2*pi / ln(eps/delta)`.
pub fn dirichlet_energy(c: &LogCutoff) -> f64 {
    2.0 * std::f64::consts::PI / c.log_ratio()
}

/// Quadrature evaluation of the Dirichlet energy on a grid covering the
/// transition annulus; companion oracle for [`dirichlet_energy`].
pub fn dirichlet_energy_quadrature(c: &LogCutoff, dom: &DiscreteDomain) -> f64 {
    let mut total = 0.0;
    for idx in 0..dom.total_nodes() {
        let (s, t) = dom.z(idx);
        let (gs, gt) = c.gradient(s, t);
        total += (gs * gs + gt * gt) * dom.flat_weight(idx);
    }
    total
}

/// Measured left side and shape factor of the cutoff-times-field product
/// bound: for a field `xi` on a disc grid with `xi(0) = 0`,
/// returns `lhs = ||grad(beta) . xi||_{L^p(transition)}` and
/// `rhs_shape = (2*pi)^{1/p} ln(eps/delta)^{-(1-1/p)} ||xi||_{W^{1,p}}`.
/// The ratio `lhs / rhs_shape` over a sweep estimates the embedding
/// constant `s_H`, which is recorded rather than assumed.
pub fn spliced_product_bound_check(
    c: &LogCutoff,
    dom: &DiscreteDomain,
    xi: &SampledField,
    p: f64,
) -> Result<(f64, f64)> {
    if xi.derivs.is_none() {
        return Err(Error::MissingDerivs(
            "spliced_product_bound_check needs W^{1,p} data".into(),
        ));
    }
    // xi must vanish at the puncture: check the inner-ring average.
    let center = dom.center_value(xi, true)?;
    let center_mag = center.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = xi
        .values
        .iter()
        .fold(0.0_f64, |a, &v| a.max(v.abs()))
        .max(1e-300);
    if center_mag > 1e-6 * scale.max(1.0) {
        return Err(Error::invalid(format!(
            "field must vanish at 0; inner value magnitude {center_mag:.3e}"
        )));
    }

    let n = dom.total_nodes();
    let mut point = vec![0.0; n];
    for idx in 0..n {
        let (s, t) = dom.z(idx);
        let (gs, gt) = c.gradient(s, t);
        let gnorm = gs.hypot(gt);
        let mut mag2 = 0.0;
        for comp in 0..xi.comps {
            let v = xi.values[idx * xi.comps + comp];
            mag2 += v * v;
        }
        point[idx] = gnorm * mag2.sqrt();
    }
    let lhs = lp_scalar_raw(dom, &point, p, 0.0);

    let w1p = crate::domain::norm(dom, xi, &NormSpec::new(p, crate::domain::NormFlavor::W1p)?)?;
    let shape = (2.0 * std::f64::consts::PI).powf(1.0 / p) * c.log_ratio().powf(-(1.0 - 1.0 / p));
    Ok((lhs, shape * w1p))
}
