//! Discretized geometries and norms.
//!
//! Every domain is a union of log-polar patches: radial knots uniform in
//! `tau = ln|z|`, `m` uniform angular nodes. Radial quadrature weights are
//! moment-fitted against the exact measure `rho^2 dtau` per interval, so
//! piecewise-linear-in-`tau` integrands (in particular constants) integrate
//! exactly; everything else converges at second order and oracle tests use
//! refined grids.
//!
//! Glued cylinders are chains of sphere patches joined along neck circles.
//! In patch-local coordinates the neck identification is the scaling
//! `z' = r^2 z`, which is a pure translation in `tau`; radial stencils
//! therefore continue smoothly across a neck by index shifts. Norm weights
//! stay patch-local (Fubini-Study per sphere) and agree on the seams.

use crate::error::{Error, Result};
use crate::stencil::{d1_knot_stencil, spectral_diff_matrix};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fubini-Study distance between the two marked points 0 and infinity of a
/// sphere chart; lower-bounds marked-point separation for chain gluing.
pub const MARKED_POINT_SEPARATION: f64 = PI / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    Annulus,
    SphereChart,
    GluedCylinder,
}

/// Conformal metric weight `theta` in `g = theta^{-2} (ds^2 + dt^2)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Weight {
    Flat,
    /// `theta = 1 + |z|^2`.
    FubiniStudy,
    /// Pair-gluing weight: `r^2 + |z|^2/r^2` inside `|z| < r`, Fubini-Study
    /// outside; continuous across `|z| = r`.
    ThetaR { r: f64 },
}

impl Weight {
    pub fn theta(&self, rho: f64) -> f64 {
        match self {
            Weight::Flat => 1.0,
            Weight::FubiniStudy => 1.0 + rho * rho,
            Weight::ThetaR { r } => {
                if rho < *r {
                    r * r + rho * rho / (r * r)
                } else {
                    1.0 + rho * rho
                }
            }
        }
    }
}

/// One log-polar patch.
#[derive(Debug, Clone)]
pub struct Patch {
    pub tau_lo: f64,
    pub h: f64,
    pub nr: usize,
    pub m: usize,
    pub weight: Weight,
    /// Segment index along a glued cylinder (0 otherwise).
    pub seg: usize,
    /// Target chart owning nodes with `tau < 0` / `tau >= 0`.
    pub chart_lo: usize,
    pub chart_hi: usize,
}

impl Patch {
    pub fn tau(&self, ring: usize) -> f64 {
        self.tau_lo + ring as f64 * self.h
    }

    pub fn theta_angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.m as f64
    }

    pub fn chart_of_ring(&self, ring: usize) -> usize {
        if self.tau(ring) < -1e-12 {
            self.chart_lo
        } else {
            self.chart_hi
        }
    }
}

/// Neck joining patch `i` (its infinity end) to patch `i+1` (its zero end).
#[derive(Debug, Clone)]
pub struct Neck {
    pub radius: f64,
}

/// A discretized annulus, sphere chart, or glued cylinder.
#[derive(Debug, Clone)]
pub struct DiscreteDomain {
    pub kind: DomainKind,
    pub patches: Vec<Patch>,
    pub necks: Vec<Neck>,
    pub n_charts: usize,
    offsets: Vec<usize>,
    total: usize,
    // cached per node
    rho: Vec<f64>,
    flat_w: Vec<f64>,
    theta: Vec<f64>,
    cyl_y: Vec<f64>,
}

/// Moment-fitted trapezoid weights on `[a, b]` for the measure `e^{2 tau} dtau`:
/// exact for integrands linear in `tau`.
fn weighted_trapezoid(a: f64, b: f64) -> (f64, f64) {
    let i0 = ((2.0 * b).exp() - (2.0 * a).exp()) / 2.0;
    let prim1 = |t: f64| (2.0 * t).exp() * (0.5 * t - 0.25);
    let i1 = prim1(b) - prim1(a);
    let wa = (b * i0 - i1) / (b - a);
    let wb = (i1 - a * i0) / (b - a);
    (wa, wb)
}

impl DiscreteDomain {
    fn from_patches(kind: DomainKind, patches: Vec<Patch>, necks: Vec<Neck>, n_charts: usize) -> Self {
        let mut offsets = Vec::with_capacity(patches.len());
        let mut total = 0usize;
        for p in &patches {
            offsets.push(total);
            total += p.nr * p.m;
        }
        let mut dom = DiscreteDomain {
            kind,
            patches,
            necks,
            n_charts,
            offsets,
            total,
            rho: vec![0.0; total],
            flat_w: vec![0.0; total],
            theta: vec![0.0; total],
            cyl_y: vec![0.0; total],
        };
        dom.build_caches();
        dom
    }

    fn build_caches(&mut self) {
        for (pi, p) in self.patches.iter().enumerate() {
            let base = self.offsets[pi];
            let dtheta = 2.0 * PI / p.m as f64;
            // radial weights: sum of moment-fitted interval contributions
            let mut radw = vec![0.0; p.nr];
            for k in 0..p.nr.saturating_sub(1) {
                let (wa, wb) = weighted_trapezoid(p.tau(k), p.tau(k + 1));
                radw[k] += wa;
                radw[k + 1] += wb;
            }
            // cylinder coordinate: seg + normalized position along the patch
            let span = p.tau(p.nr - 1) - p.tau_lo;
            for ring in 0..p.nr {
                let tau = p.tau(ring);
                let rho = tau.exp();
                let theta = p.weight.theta(rho);
                let y = p.seg as f64 + if span > 0.0 { (tau - p.tau_lo) / span } else { 0.0 };
                for j in 0..p.m {
                    let idx = base + ring * p.m + j;
                    self.rho[idx] = rho;
                    self.flat_w[idx] = radw[ring] * dtheta;
                    self.theta[idx] = theta;
                    self.cyl_y[idx] = y;
                }
            }
        }
    }

    /// Log-spaced annulus `A(r_inner, r_outer)`.
    pub fn annulus(r_inner: f64, r_outer: f64, nr: usize, m: usize, weight: Weight) -> Result<Self> {
        if !(r_inner > 0.0 && r_outer > r_inner) {
            return Err(Error::invalid(format!(
                "degenerate annulus radii ({r_inner}, {r_outer})"
            )));
        }
        if nr < 16 {
            return Err(Error::invalid("need at least 16 radial knots"));
        }
        if m < 16 || m % 2 != 0 {
            return Err(Error::invalid("angular node count must be even and >= 16"));
        }
        let tau_lo = r_inner.ln();
        let h = (r_outer.ln() - tau_lo) / (nr - 1) as f64;
        let patch = Patch {
            tau_lo,
            h,
            nr,
            m,
            weight,
            seg: 0,
            chart_lo: 0,
            chart_hi: 0,
        };
        Ok(Self::from_patches(DomainKind::Annulus, vec![patch], vec![], 1))
    }

    /// Sphere chart as a log-polar annulus with the Fubini-Study weight and
    /// explicit `tau` bounds plus chart assignment (used for chain spheres).
    pub fn sphere_chart_extended(
        tau_lo: f64,
        tau_hi: f64,
        h: f64,
        m: usize,
        seg: usize,
        chart_lo: usize,
        chart_hi: usize,
        n_charts: usize,
    ) -> Result<Self> {
        let nr = ((tau_hi - tau_lo) / h).round() as usize + 1;
        if nr < 8 {
            return Err(Error::invalid("sphere chart grid too coarse"));
        }
        let patch = Patch {
            tau_lo,
            h,
            nr,
            m,
            weight: Weight::FubiniStudy,
            seg,
            chart_lo,
            chart_hi,
        };
        Ok(Self::from_patches(DomainKind::SphereChart, vec![patch], vec![], n_charts))
    }

    /// Simple sphere chart over `[rho_min, rho_max]`, single target chart.
    pub fn sphere_chart(rho_min: f64, rho_max: f64, nr: usize, m: usize) -> Result<Self> {
        let mut dom = Self::annulus(rho_min, rho_max, nr, m, Weight::FubiniStudy)?;
        dom.kind = DomainKind::SphereChart;
        Ok(dom)
    }

    /// Periodic glued cylinder: `n * periods` sphere segments joined along
    /// neck circles of the given radii (`radii[i]` is used at the neck
    /// between segment `i-1` and segment `i`, indices mod `n * periods`).
    ///
    /// `h_sixth` controls resolution: the knot step is `|ln r|/(6 * h_sixth)`
    /// for the smallest neck radius; all neck log-radii are snapped to the
    /// grid so seams land on knots.
    pub fn glued_cylinder(
        n: usize,
        periods: usize,
        radii: &[f64],
        h_sixth: usize,
        m: usize,
    ) -> Result<Self> {
        if periods < 1 {
            return Err(Error::invalid("periods must be >= 1"));
        }
        if n < 3 {
            return Err(Error::invalid("need at least 3 curves in the chain"));
        }
        let k = n * periods;
        if radii.len() != k {
            return Err(Error::invalid(format!(
                "expected {k} neck radii, got {}",
                radii.len()
            )));
        }
        let max_r = radii.iter().cloned().fold(0.0_f64, f64::max);
        if max_r >= MARKED_POINT_SEPARATION / 3.0 {
            return Err(Error::invalid(format!(
                "neck radius {max_r} too large: discs would overlap (limit {})",
                MARKED_POINT_SEPARATION / 3.0
            )));
        }
        if radii.iter().any(|&r| r <= 0.0) {
            return Err(Error::invalid("neck radii must be positive"));
        }
        let r_min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
        let h = (-r_min.ln()) / (6 * h_sixth) as f64;
        // snap neck log-radii onto the grid
        let snapped: Vec<f64> = radii
            .iter()
            .map(|&r| {
                let steps = ((-r.ln()) / h).round().max(1.0);
                (-steps * h).exp()
            })
            .collect();
        let mut patches = Vec::with_capacity(k);
        for i in 0..k {
            let r_lo = snapped[i];
            let r_hi = snapped[(i + 1) % k];
            let tau_lo = r_lo.ln();
            let tau_hi = -r_hi.ln();
            let nr = ((tau_hi - tau_lo) / h).round() as usize + 1;
            patches.push(Patch {
                tau_lo,
                h,
                nr,
                m,
                weight: Weight::FubiniStudy,
                seg: i,
                chart_lo: (i + n - 1) % n,
                chart_hi: i % n,
            });
        }
        let necks = snapped.iter().map(|&radius| Neck { radius }).collect();
        Ok(Self::from_patches(DomainKind::GluedCylinder, patches, necks, n))
    }

    pub fn total_nodes(&self) -> usize {
        self.total
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn patch_offset(&self, patch: usize) -> usize {
        self.offsets[patch]
    }

    pub fn node_index(&self, patch: usize, ring: usize, j: usize) -> usize {
        self.offsets[patch] + ring * self.patches[patch].m + j
    }

    pub fn node_of(&self, idx: usize) -> (usize, usize, usize) {
        let patch = match self.offsets.binary_search(&idx) {
            Ok(p) => p,
            Err(p) => p - 1,
        };
        let local = idx - self.offsets[patch];
        let m = self.patches[patch].m;
        (patch, local / m, local % m)
    }

    /// Patch-local radius `|z|`.
    pub fn rho(&self, idx: usize) -> f64 {
        self.rho[idx]
    }

    /// Patch-local Cartesian coordinates.
    pub fn z(&self, idx: usize) -> (f64, f64) {
        let (patch, _ring, j) = self.node_of(idx);
        let theta = self.patches[patch].theta_angle(j);
        (self.rho[idx] * theta.cos(), self.rho[idx] * theta.sin())
    }

    /// Flat area element `rho drho dtheta` attached to the node.
    pub fn flat_weight(&self, idx: usize) -> f64 {
        self.flat_w[idx]
    }

    /// Metric weight `theta(z)` at the node.
    pub fn metric_theta(&self, idx: usize) -> f64 {
        self.theta[idx]
    }

    /// Cylinder coordinate of the node (segment index + fractional position).
    pub fn cylinder_y(&self, idx: usize) -> f64 {
        self.cyl_y[idx]
    }

    /// Axial period of a glued cylinder (number of segments).
    pub fn cylinder_period(&self) -> f64 {
        self.patches.len() as f64
    }

    pub fn chart_of(&self, patch: usize, ring: usize) -> usize {
        self.patches[patch].chart_of_ring(ring)
    }

    /// Resolve a (possibly out-of-range) ring index to a concrete patch ring.
    /// On glued cylinders the grid continues smoothly across necks (the
    /// identification is a translation in `tau`); elsewhere returns `None`.
    pub fn resolve_ring(&self, patch: usize, ring: isize) -> Option<(usize, usize)> {
        let nr = self.patches[patch].nr as isize;
        if ring >= 0 && ring < nr {
            return Some((patch, ring as usize));
        }
        if self.kind != DomainKind::GluedCylinder {
            return None;
        }
        let k = self.patches.len() as isize;
        if ring < 0 {
            let p = ((patch as isize - 1).rem_euclid(k)) as usize;
            let nrp = self.patches[p].nr as isize;
            // this patch's ring 0 coincides with neighbor's last ring
            let r2 = nrp - 1 + ring;
            self.resolve_ring(p, r2)
        } else {
            let p = ((patch as isize + 1).rem_euclid(k)) as usize;
            let r2 = ring - (nr - 1);
            self.resolve_ring(p, r2)
        }
    }

    /// Total quadrature volume with the metric weight.
    pub fn volume(&self) -> f64 {
        (0..self.total)
            .map(|i| self.flat_w[i] / (self.theta[i] * self.theta[i]))
            .sum()
    }

    /// Mode-0 average over the innermost (`inner = true`) or outermost ring
    /// of a single-patch domain: proxy for the field value at the puncture.
    pub fn center_value(&self, field: &SampledField, inner: bool) -> Result<Vec<f64>> {
        if self.patches.len() != 1 {
            return Err(Error::DomainMismatch(
                "center_value needs a single-patch domain".into(),
            ));
        }
        let p = &self.patches[0];
        let ring = if inner { 0 } else { p.nr - 1 };
        Ok(self.ring_average(field, 0, ring))
    }

    /// Mode-0 (angular) average of a field over one ring.
    pub fn ring_average(&self, field: &SampledField, patch: usize, ring: usize) -> Vec<f64> {
        let p = &self.patches[patch];
        let mut avg = vec![0.0; field.comps];
        for j in 0..p.m {
            let idx = self.node_index(patch, ring, j);
            for c in 0..field.comps {
                avg[c] += field.values[idx * field.comps + c];
            }
        }
        for v in avg.iter_mut() {
            *v /= p.m as f64;
        }
        avg
    }

    /// Angular spectral differentiation matrix for this domain's `m`.
    pub fn angular_diff(&self) -> DMatrix<f64> {
        spectral_diff_matrix(self.patches[0].m)
    }

    /// Differentiate nodal values: returns `(d/ds, d/dt)` fields computed
    /// spectrally in the angle and with 4th-order stencils in `tau`
    /// (one-sided at patch edges; continued across necks on cylinders).
    pub fn differentiate(&self, values: &[f64], comps: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.total;
        let mut ds = vec![0.0; n * comps];
        let mut dt = vec![0.0; n * comps];
        for (pi, p) in self.patches.iter().enumerate() {
            let dmat = spectral_diff_matrix(p.m);
            for ring in 0..p.nr {
                // radial stencil, possibly crossing necks
                let (offsets, wts) = self.radial_stencil(pi, ring);
                for j in 0..p.m {
                    let idx = self.node_index(pi, ring, j);
                    let theta = p.theta_angle(j);
                    let (cs, sn) = (theta.cos(), theta.sin());
                    let rho = self.rho[idx];
                    let s = rho * cs;
                    let t = rho * sn;
                    for c in 0..comps {
                        let mut dtau = 0.0;
                        for (o, w) in offsets.iter().zip(&wts) {
                            let (pp, rr) = *o;
                            let nidx = self.node_index(pp, rr, j);
                            dtau += w * values[nidx * comps + c];
                        }
                        let mut dth = 0.0;
                        for jj in 0..p.m {
                            let nidx = self.node_index(pi, ring, jj);
                            dth += dmat[(j, jj)] * values[nidx * comps + c];
                        }
                        let r2 = rho * rho;
                        ds[idx * comps + c] = (s * dtau - t * dth) / r2;
                        dt[idx * comps + c] = (t * dtau + s * dth) / r2;
                    }
                }
            }
        }
        (ds, dt)
    }

    /// 5-point 4th-order first-derivative stencil in `tau` at a knot,
    /// resolved across necks where possible.
    pub fn radial_stencil(&self, patch: usize, ring: usize) -> (Vec<(usize, usize)>, Vec<f64>) {
        let p = &self.patches[patch];
        if self.kind == DomainKind::GluedCylinder {
            let mut offsets = Vec::with_capacity(5);
            let mut xs = Vec::with_capacity(5);
            for o in -2isize..=2 {
                if let Some(rr) = self.resolve_ring(patch, ring as isize + o) {
                    offsets.push(rr);
                    xs.push(o as f64 * p.h);
                }
            }
            let w = crate::stencil::fd_weights(0.0, &xs, 1);
            (offsets, w)
        } else {
            let (off, w) = d1_knot_stencil(ring, p.nr, p.h);
            let offsets = off
                .iter()
                .map(|&o| (patch, (ring as isize + o) as usize))
                .collect();
            (offsets, w)
        }
    }

    /// Check periodic/seam consistency of duplicated circles on a cylinder.
    pub fn seam_defect(&self, values: &[f64], comps: usize) -> f64 {
        if self.kind != DomainKind::GluedCylinder {
            return 0.0;
        }
        let k = self.patches.len();
        let mut worst = 0.0_f64;
        for pi in 0..k {
            let p = &self.patches[pi];
            let prev = (pi + k - 1) % k;
            let nr_prev = self.patches[prev].nr;
            for j in 0..p.m {
                let a = self.node_index(pi, 0, j);
                let b = self.node_index(prev, nr_prev - 1, j);
                for c in 0..comps {
                    worst = worst.max((values[a * comps + c] - values[b * comps + c]).abs());
                }
            }
        }
        worst
    }
}

/// Whether sampled data transforms as a vector field or a (0,1)-form
/// coefficient (forms pick up the `theta^{p-2}` weight in `L^p` norms).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Vector,
    Form,
}

/// Field sampled on the nodes of a domain, components interleaved per node.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub comps: usize,
    pub kind: FieldKind,
    pub values: Vec<f64>,
    /// Optional `(d/ds, d/dt)` data, same layout as `values`.
    pub derivs: Option<(Vec<f64>, Vec<f64>)>,
}

impl SampledField {
    pub fn zeros(nodes: usize, comps: usize) -> Self {
        SampledField {
            comps,
            kind: FieldKind::Vector,
            values: vec![0.0; nodes * comps],
            derivs: None,
        }
    }

    pub fn from_values(values: Vec<f64>, comps: usize, kind: FieldKind) -> Self {
        SampledField {
            comps,
            kind,
            values,
            derivs: None,
        }
    }

    /// Attach stencil-computed derivatives.
    pub fn with_derivs(mut self, dom: &DiscreteDomain) -> Self {
        let (ds, dt) = dom.differentiate(&self.values, self.comps);
        self.derivs = Some((ds, dt));
        self
    }

    pub fn node_magnitude(&self, idx: usize) -> f64 {
        let mut m = 0.0;
        for c in 0..self.comps {
            let v = self.values[idx * self.comps + c];
            m += v * v;
        }
        m.sqrt()
    }

    fn deriv_magnitude(&self, idx: usize) -> Option<f64> {
        let (ds, dt) = self.derivs.as_ref()?;
        let mut m = 0.0;
        for c in 0..self.comps {
            let a = ds[idx * self.comps + c];
            let b = dt[idx * self.comps + c];
            m += a * a + b * b;
        }
        Some(m.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormFlavor {
    Lp,
    W1p,
    LinfLp,
    LinfW1p,
    C0,
}

/// Norm selector. `p > 2` is enforced: the pointwise evaluations that drive
/// the construction stop making sense at `p = 2`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormSpec {
    pub p: f64,
    pub flavor: NormFlavor,
    pub window_halfwidth: f64,
}

impl NormSpec {
    pub fn new(p: f64, flavor: NormFlavor) -> Result<Self> {
        if !(p > 2.0) {
            return Err(Error::invalid(format!("Lebesgue exponent must be > 2, got {p}")));
        }
        Ok(NormSpec {
            p,
            flavor,
            window_halfwidth: 2.0 / 3.0,
        })
    }

    pub fn with_window(mut self, halfwidth: f64) -> Self {
        self.window_halfwidth = halfwidth;
        self
    }
}

/// Raw `L^p` norm of pointwise magnitudes with an explicit extra power of
/// the metric weight (`theta_pow = -2` for volume terms, `p - 2` for forms
/// and gradients, `0` for flat Lebesgue). Accepts any `p >= 1`; used by the
/// closed-form oracles, including their `p = 2` limit cases.
pub fn lp_scalar_raw(dom: &DiscreteDomain, magnitudes: &[f64], p: f64, theta_pow: f64) -> f64 {
    let mut acc = 0.0;
    for idx in 0..dom.total_nodes() {
        let th = dom.metric_theta(idx);
        acc += magnitudes[idx].abs().powf(p) * dom.flat_weight(idx) * th.powf(theta_pow);
    }
    acc.powf(1.0 / p)
}

fn windowed_lp(
    dom: &DiscreteDomain,
    point_p: impl Fn(usize) -> f64,
    p: f64,
    halfwidth: f64,
) -> f64 {
    if dom.kind != DomainKind::GluedCylinder {
        let total: f64 = (0..dom.total_nodes()).map(&point_p).sum();
        return total.powf(1.0 / p);
    }
    let period = dom.cylinder_period();
    let centers = dom.patches.len();
    let mut worst = 0.0_f64;
    for n in 0..centers {
        let c = n as f64;
        let mut acc = 0.0;
        for idx in 0..dom.total_nodes() {
            let mut d = (dom.cylinder_y(idx) - c).abs() % period;
            if d > period / 2.0 {
                d = period - d;
            }
            if d <= halfwidth {
                acc += point_p(idx);
            }
        }
        worst = worst.max(acc);
    }
    worst.powf(1.0 / p)
}

/// Norm of a sampled field under the given spec. The volume element carries
/// `theta^{-2}`; gradient and form magnitudes carry the conformal factor
/// `theta`, so their `L^p` integrands come out weighted by `theta^{p-2}`.
pub fn norm(dom: &DiscreteDomain, field: &SampledField, spec: &NormSpec) -> Result<f64> {
    let p = spec.p;
    let needs_derivs = matches!(spec.flavor, NormFlavor::W1p | NormFlavor::LinfW1p);
    if needs_derivs && field.derivs.is_none() {
        return Err(Error::MissingDerivs("W^{1,p} norm requested".into()));
    }
    let value_pow = match field.kind {
        FieldKind::Vector => -2.0,
        FieldKind::Form => p - 2.0,
    };
    let point_value = |idx: usize| -> f64 {
        let th = dom.metric_theta(idx);
        field.node_magnitude(idx).powf(p) * dom.flat_weight(idx) * th.powf(value_pow)
    };
    match spec.flavor {
        NormFlavor::C0 => {
            let mut worst = 0.0_f64;
            for idx in 0..dom.total_nodes() {
                worst = worst.max(field.node_magnitude(idx));
            }
            Ok(worst)
        }
        NormFlavor::Lp => {
            let total: f64 = (0..dom.total_nodes()).map(point_value).sum();
            Ok(total.powf(1.0 / p))
        }
        NormFlavor::LinfLp => Ok(windowed_lp(dom, point_value, p, spec.window_halfwidth)),
        NormFlavor::W1p | NormFlavor::LinfW1p => {
            let point_full = |idx: usize| -> f64 {
                let th = dom.metric_theta(idx);
                let v = field.node_magnitude(idx).powf(p) * th.powf(value_pow);
                let g = field.deriv_magnitude(idx).unwrap().powf(p) * th.powf(p - 2.0);
                (v + g) * dom.flat_weight(idx)
            };
            if spec.flavor == NormFlavor::W1p {
                let total: f64 = (0..dom.total_nodes()).map(point_full).sum();
                Ok(total.powf(1.0 / p))
            } else {
                Ok(windowed_lp(dom, point_full, p, spec.window_halfwidth))
            }
        }
    }
}

/// Exact `L^p(A_{r^eps, r^delta})` norm (flat weight) of `z^l`, or of
/// `r^{l'} / z^l` when `lprime` is given.
pub fn annulus_power_norm_closed_form(
    r: f64,
    eps_exp: f64,
    delta_exp: f64,
    p: f64,
    l: i32,
    lprime: Option<i32>,
) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("need 0 < r < 1"));
    }
    // the closed form holds for any 0 <= delta < eps (the annulus A(r^eps, r^delta))
    if !(0.0 <= delta_exp && delta_exp < eps_exp) {
        return Err(Error::invalid("need 0 <= delta < eps"));
    }
    if l < 1 {
        return Err(Error::invalid("need l >= 1"));
    }
    if !(p > 2.0) {
        return Err(Error::invalid("need p > 2"));
    }
    let lp = l as f64 * p;
    match lprime {
        None => {
            // positive power z^l; exponent 2 + lp never degenerates here
            let k = (2.0 * PI * (1.0 - r.powf((eps_exp - delta_exp) * (2.0 + lp))) / (2.0 + lp))
                .powf(1.0 / p);
            Ok(k * r.powf(delta_exp * (l as f64 + 2.0 / p)))
        }
        Some(lpr) => {
            if (lp - 2.0).abs() < 1e-12 {
                return Err(Error::invalid("degenerate exponent l*p = 2"));
            }
            let k = (2.0 * PI * (1.0 - r.powf((eps_exp - delta_exp) * (lp - 2.0))) / (lp - 2.0))
                .powf(1.0 / p);
            Ok(k * r.powf(lpr as f64 + eps_exp * (2.0 / p - l as f64)))
        }
    }
}

/// Lower estimate of the Sobolev embedding constant
/// `s_p = sup ||f||_inf / ||f||_{W^{1,p}}` by maximizing the ratio over
/// seeded random smooth probes plus near-extremal log-cutoff profiles.
pub fn sobolev_constant_estimate(
    dom: &DiscreteDomain,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials < 100 {
        return Err(Error::invalid("need at least 100 trials"));
    }
    let spec = NormSpec::new(p, NormFlavor::W1p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dom.total_nodes();
    let mut best: f64 = 0.0;

    let mut eval_ratio = |values: Vec<f64>| -> Result<()> {
        let field = SampledField::from_values(values, 1, FieldKind::Vector).with_derivs(dom);
        let w = norm(dom, &field, &spec)?;
        if w > 1e-14 {
            let sup = field
                .values
                .iter()
                .fold(0.0_f64, |a, &v| a.max(v.abs()));
            best = best.max(sup / w);
        }
        Ok(())
    };

    // random smooth Fourier probes in (normalized tau, theta)
    let kmax = 4usize;
    for _ in 0..trials {
        let mut coeffs = Vec::new();
        for _ in 0..((kmax + 1) * (kmax + 1)) {
            coeffs.push((
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.0..2.0 * PI),
            ));
        }
        let mut vals = vec![0.0; n];
        for idx in 0..n {
            let (patch, ring, j) = dom.node_of(idx);
            let pch = &dom.patches[patch];
            let span = pch.tau(pch.nr - 1) - pch.tau_lo;
            let u = if span > 0.0 {
                (pch.tau(ring) - pch.tau_lo) / span
            } else {
                0.0
            };
            let th = pch.theta_angle(j);
            let mut v = 0.0;
            for (ci, c) in coeffs.iter().enumerate() {
                let kr = (ci / (kmax + 1)) as f64;
                let ka = (ci % (kmax + 1)) as f64;
                let damp = 1.0 / (1.0 + kr * kr + ka * ka);
                v += damp * c.0 * (kr * PI * u + c.2).cos() * (ka * th + c.3).cos()
                    + damp * c.1 * (kr * PI * u + c.2).sin() * (ka * th + c.3).sin();
            }
            vals[idx] = v;
        }
        eval_ratio(vals)?;
    }

    // near-extremal log-cutoff profiles
    let p0 = &dom.patches[0];
    let rho_lo = p0.tau_lo.exp();
    let rho_hi = p0.tau(p0.nr - 1).exp();
    for frac in [0.15, 0.3, 0.5, 0.7] {
        let delta = rho_lo * (rho_hi / rho_lo).powf(frac * 0.5);
        let eps = rho_lo * (rho_hi / rho_lo).powf(frac);
        if eps > delta && delta > rho_lo {
            let cut = crate::cutoff::LogCutoff::inner_one(delta, eps)?;
            let vals: Vec<f64> = (0..n).map(|idx| cut.eval_radial(dom.rho(idx))).collect();
            eval_ratio(vals)?;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn flat_annulus_area_is_exact() {
        let dom = DiscreteDomain::annulus(0.5, 1.0, 24, 16, Weight::Flat).unwrap();
        let area: f64 = (0..dom.total_nodes()).map(|i| dom.flat_weight(i)).sum();
        assert_abs_diff_eq!(area, PI * (1.0 - 0.25), epsilon = 1e-10);
    }

    #[test]
    fn degenerate_radii_rejected() {
        assert!(DiscreteDomain::annulus(1.0, 1.0, 24, 16, Weight::Flat).is_err());
        assert!(DiscreteDomain::annulus(0.5, 1.0, 24, 15, Weight::Flat).is_err());
    }

    #[test]
    fn theta_r_continuous_at_r() {
        let w = Weight::ThetaR { r: 0.05 };
        let lo = w.theta(0.05 - 1e-15);
        let hi = w.theta(0.05 + 1e-15);
        assert!((lo - hi).abs() < 1e-12);
        assert_abs_diff_eq!(w.theta(0.05), 0.05_f64.powi(2) + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn theta_r_outer_branch_in_unit_range() {
        let r = 0.01_f64;
        let dom =
            DiscreteDomain::annulus(r, r.powf(2.0 / 3.0), 24, 16, Weight::ThetaR { r }).unwrap();
        assert_eq!(dom.total_nodes(), 24 * 16);
        for i in 0..dom.total_nodes() {
            let th = dom.metric_theta(i);
            assert!((1.0..=2.0).contains(&th), "theta {th} out of range");
        }
    }

    #[test]
    fn sphere_chart_volume_bounded() {
        let dom = DiscreteDomain::sphere_chart(1e-3, 1e3, 200, 16).unwrap();
        let vol = dom.volume();
        assert!(vol <= 2.0 * PI + 1e-6, "vol = {vol}");
        // full chart volume tends to pi
        assert_abs_diff_eq!(vol, PI, epsilon = 1e-2);
    }

    #[test]
    fn linear_field_norm_matches_closed_form() {
        // ||z||_{L^2(A(0.5,1))} via raw quadrature vs 2*pi*(1-0.5^4)/4
        let dom = DiscreteDomain::annulus(0.5, 1.0, 400, 16, Weight::Flat).unwrap();
        let mags: Vec<f64> = (0..dom.total_nodes()).map(|i| dom.rho(i)).collect();
        let got = lp_scalar_raw(&dom, &mags, 2.0, 0.0);
        let expect = (2.0 * PI * (1.0 - 0.5_f64.powi(4)) / 4.0).sqrt();
        assert_abs_diff_eq!(got, expect, epsilon = 1e-5);
        assert_abs_diff_eq!(expect, 1.21352, epsilon = 1e-5);
    }

    #[test]
    fn closed_form_examples() {
        // || r^2 / z ||_{L^4(A(0.25,1))} with r = 0.5: inner radius r^2, outer r^0
        let v = annulus_power_norm_closed_form(0.5, 2.0, 0.0, 4.0, 1, Some(2)).unwrap();
        assert_abs_diff_eq!(v, 0.6551, epsilon = 5e-4);
        // empty annulus
        let e = annulus_power_norm_closed_form(0.5, 1.0, 1.0, 4.0, 1, None);
        assert!(e.is_err());
    }

    #[test]
    fn closed_form_matches_quadrature_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let r = rng.gen_range(0.05..0.5);
            let delta: f64 = rng.gen_range(0.0..0.5);
            let eps = delta + rng.gen_range(0.1..(1.0 - delta).clamp(0.11, 0.5));
            let p = rng.gen_range(2.2..4.0);
            let l = rng.gen_range(1..3);
            let closed = annulus_power_norm_closed_form(r, eps, delta, p, l, None).unwrap();
            let dom = DiscreteDomain::annulus(
                r.powf(eps),
                r.powf(delta),
                3000,
                16,
                Weight::Flat,
            )
            .unwrap();
            let mags: Vec<f64> = (0..dom.total_nodes())
                .map(|i| dom.rho(i).powi(l))
                .collect();
            let quad = lp_scalar_raw(&dom, &mags, p, 0.0);
            assert!(
                (quad - closed).abs() <= 1e-6 * closed,
                "lpz mismatch: quad {quad}, closed {closed}"
            );
        }
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let dom = DiscreteDomain::annulus(0.5, 1.0, 24, 16, Weight::Flat).unwrap();
        let f = SampledField::zeros(dom.total_nodes(), 4);
        for flavor in [NormFlavor::Lp, NormFlavor::C0, NormFlavor::LinfLp] {
            let spec = NormSpec::new(2.5, flavor).unwrap();
            assert_eq!(norm(&dom, &f, &spec).unwrap(), 0.0);
        }
    }

    #[test]
    fn w1p_requires_derivatives() {
        let dom = DiscreteDomain::annulus(0.5, 1.0, 24, 16, Weight::Flat).unwrap();
        let f = SampledField::zeros(dom.total_nodes(), 2);
        let spec = NormSpec::new(2.5, NormFlavor::W1p).unwrap();
        assert!(norm(&dom, &f, &spec).is_err());
    }

    #[test]
    fn norm_spec_rejects_small_p() {
        assert!(NormSpec::new(2.0, NormFlavor::Lp).is_err());
        assert!(NormSpec::new(1.5, NormFlavor::Lp).is_err());
    }

    #[test]
    fn glued_cylinder_volume_and_bookkeeping() {
        let radii = [0.05; 3];
        let dom = DiscreteDomain::glued_cylinder(3, 1, &radii, 1, 16).unwrap();
        assert_eq!(dom.num_patches(), 3);
        let vol = dom.volume();
        assert!(vol <= 3.0 * 2.0 * PI, "vol = {vol}");
        // window count for two periods
        let dom2 = DiscreteDomain::glued_cylinder(3, 2, &[0.05; 6], 1, 16).unwrap();
        assert_eq!(dom2.num_patches(), 6);
    }

    #[test]
    fn glued_cylinder_rejects_bad_input() {
        assert!(DiscreteDomain::glued_cylinder(3, 0, &[0.05; 3], 1, 16).is_err());
        let too_big = MARKED_POINT_SEPARATION / 3.0 + 0.01;
        assert!(DiscreteDomain::glued_cylinder(3, 1, &[too_big; 3], 1, 16).is_err());
    }

    #[test]
    fn cross_neck_ring_resolution_roundtrip() {
        let dom = DiscreteDomain::glued_cylinder(3, 1, &[0.05; 3], 1, 16).unwrap();
        let nr0 = dom.patches[0].nr;
        // one past the top of patch 0 lands on patch 1 ring 1
        assert_eq!(dom.resolve_ring(0, nr0 as isize), Some((1, 1)));
        // one below patch 1's bottom is patch 0's second-to-last ring
        assert_eq!(dom.resolve_ring(1, -1), Some((0, nr0 - 2)));
    }

    #[test]
    fn cylinder_derivative_smooth_across_necks() {
        // a globally smooth function of the cylinder log-coordinate
        let dom = DiscreteDomain::glued_cylinder(3, 1, &[0.05; 3], 2, 16).unwrap();
        let k = dom.num_patches() as f64;
        let n = dom.total_nodes();
        let mut vals = vec![0.0; n];
        for idx in 0..n {
            let y = dom.cylinder_y(idx);
            vals[idx] = (2.0 * PI * y / k).sin();
        }
        let (ds, dt) = dom.differentiate(&vals, 1);
        // compare against analytic derivative via chain rule at a node near a seam
        for (pi, p) in dom.patches.iter().enumerate() {
            let span = p.tau(p.nr - 1) - p.tau_lo;
            for ring in [0usize, 1, p.nr - 2] {
                let idx = dom.node_index(pi, ring, 3);
                let y = dom.cylinder_y(idx);
                let dy_dtau = 1.0 / span;
                let expect_dtau = (2.0 * PI / k) * (2.0 * PI * y / k).cos() * dy_dtau;
                // ds,dt combine dtau with zero angular derivative:
                let theta = p.theta_angle(3);
                let rho = dom.rho(idx);
                let es = theta.cos() * expect_dtau / rho;
                let et = theta.sin() * expect_dtau / rho;
                assert!(
                    (ds[idx] - es).abs() < 2e-4 && (dt[idx] - et).abs() < 2e-4,
                    "seam-crossing derivative off at patch {pi} ring {ring}"
                );
            }
        }
    }

    #[test]
    fn sobolev_estimate_is_stable_across_seeds() {
        let dom = DiscreteDomain::annulus(1e-3, 1.0, 60, 16, Weight::Flat).unwrap();
        let a = sobolev_constant_estimate(&dom, 3.0, 120, 1).unwrap();
        let b = sobolev_constant_estimate(&dom, 3.0, 120, 2).unwrap();
        assert!(a > 0.0 && b > 0.0);
        let ratio = (a / b).max(b / a);
        assert!(ratio < 1.2, "estimates {a} vs {b}");
    }
}
