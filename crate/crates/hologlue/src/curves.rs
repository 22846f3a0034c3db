//! Curve representation and pointwise analysis.
//!
//! Target values live in `R^{2n}` identified with `C^n` on interleaved
//! coordinates; the product `z a` of a complex scalar and a vector means
//! `x a + y J_0 a`, which is plain complex multiplication pairwise. Curves
//! on multi-chart domains store each node's value in the chart owning that
//! node; stencils that cross a chart boundary transform neighbor data
//! before differencing.

use crate::acs::AlmostComplexStructure;
use crate::chart::ChartCycle;
use crate::domain::{DiscreteDomain, DomainKind, FieldKind, SampledField};
use crate::error::{Error, Result};
use crate::stencil::spectral_diff_matrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// `(x + iy) * a` under the complex-module structure on interleaved pairs.
pub fn cmul_vec(x: f64, y: f64, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for k in 0..a.len() / 2 {
        out[2 * k] = x * a[2 * k] - y * a[2 * k + 1];
        out[2 * k + 1] = y * a[2 * k] + x * a[2 * k + 1];
    }
    out
}

/// `J_0 a` (multiplication by `i`).
pub fn j0_vec(a: &[f64]) -> Vec<f64> {
    cmul_vec(0.0, 1.0, a)
}

/// Integer power of a complex number.
pub fn zpow(mut x: f64, mut y: f64, k: i32) -> (f64, f64) {
    if k < 0 {
        let d = x * x + y * y;
        x /= d;
        y = -y / d;
        return zpow(x, y, -k);
    }
    let (mut rx, mut ry) = (1.0, 0.0);
    for _ in 0..k {
        let nx = rx * x - ry * y;
        let ny = rx * y + ry * x;
        rx = nx;
        ry = ny;
    }
    (rx, ry)
}

/// Laurent-polynomial curve in one chart: `u(z) = sum_k a_k z^k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartCurve {
    pub dim_half: usize,
    pub terms: Vec<(i32, Vec<f64>)>,
}

impl ChartCurve {
    pub fn line(a: &[f64]) -> Self {
        ChartCurve {
            dim_half: a.len() / 2,
            terms: vec![(1, a.to_vec())],
        }
    }

    pub fn with_term(mut self, k: i32, a: &[f64]) -> Self {
        self.terms.push((k, a.to_vec()));
        self
    }

    pub fn value(&self, x: f64, y: f64) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.dim_half];
        for (k, a) in &self.terms {
            let (px, py) = zpow(x, y, *k);
            let t = cmul_vec(px, py, a);
            for (o, v) in out.iter_mut().zip(t.iter()) {
                *o += v;
            }
        }
        out
    }

    /// Complex derivative `u'(z)` as a module vector.
    pub fn dz(&self, x: f64, y: f64) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.dim_half];
        for (k, a) in &self.terms {
            if *k == 0 {
                continue;
            }
            let (px, py) = zpow(x, y, *k - 1);
            let t = cmul_vec(*k as f64 * px, *k as f64 * py, a);
            for (o, v) in out.iter_mut().zip(t.iter()) {
                *o += v;
            }
        }
        out
    }

    /// Linear coefficient (the `z^1` term), if present.
    pub fn tangent(&self) -> Vec<f64> {
        self.terms
            .iter()
            .find(|(k, _)| *k == 1)
            .map(|(_, a)| a.clone())
            .unwrap_or_else(|| vec![0.0; 2 * self.dim_half])
    }
}

/// One edge of a cyclic chain: near its 0-end the curve is `lower(z)` in
/// chart `(i-1) mod n`, near its infinity-end it is `upper(1/z)` in chart
/// `i mod n`; the two halves agree across the equator under the atlas.
#[derive(Debug, Clone)]
pub struct EdgeCurve {
    pub lower: ChartCurve,
    pub upper: ChartCurve,
}

/// Cyclic chain geometry (the canonical line triangle for `n = 3`).
#[derive(Debug, Clone)]
pub struct ChainGeometry {
    pub n: usize,
    pub atlas: ChartCycle,
    pub edges: Vec<EdgeCurve>,
}

impl ChainGeometry {
    /// Three projective lines meeting cyclically; every edge reads
    /// `(z, 0)` below the equator in its 0-end chart and `(0, zeta)` in the
    /// infinity-end chart.
    pub fn triangle() -> Self {
        let a_low = [1.0, 0.0, 0.0, 0.0];
        let a_up = [0.0, 0.0, 1.0, 0.0];
        let edges = (0..3)
            .map(|_| EdgeCurve {
                lower: ChartCurve::line(&a_low),
                upper: ChartCurve::line(&a_up),
            })
            .collect();
        ChainGeometry {
            n: 3,
            atlas: ChartCycle::new(3),
            edges,
        }
    }

    pub fn dim_half(&self) -> usize {
        self.edges[0].lower.dim_half
    }

    /// Value and complex derivative of edge `e` at a patch-local point,
    /// in the chart owning that half (`upper = true` means `tau >= 0`).
    pub fn edge_point(&self, e: usize, x: f64, y: f64, upper: bool) -> (Vec<f64>, Vec<f64>) {
        let edge = &self.edges[e % self.n];
        if !upper {
            (edge.lower.value(x, y), edge.lower.dz(x, y))
        } else {
            let d = x * x + y * y;
            let (zx, zy) = (x / d, -y / d);
            let val = edge.upper.value(zx, zy);
            // d/dz upper(1/z) = upper'(1/z) * (-1/z^2)
            let dup = edge.upper.dz(zx, zy);
            let (m2x, m2y) = zpow(zx, zy, 2);
            (val, cmul_vec(-m2x, -m2y, &dup))
        }
    }

    /// Tangent of the incoming edge at vertex `v` (in chart `v`).
    pub fn tangent_incoming(&self, v: usize) -> Vec<f64> {
        self.edges[v % self.n].upper.tangent()
    }

    /// Tangent of the outgoing edge at vertex `v` (in chart `v`).
    pub fn tangent_outgoing(&self, v: usize) -> Vec<f64> {
        self.edges[(v + 1) % self.n].lower.tangent()
    }
}

/// A sampled map from a discretized domain into `R^{2n}`, with per-node
/// first derivatives `(d/ds, d/dt)` in patch-local coordinates.
#[derive(Debug, Clone)]
pub struct CurveSamples {
    pub domain: Arc<DiscreteDomain>,
    pub dim_half: usize,
    pub values: Vec<f64>,
    pub d_s: Vec<f64>,
    pub d_t: Vec<f64>,
}

impl CurveSamples {
    pub fn comps(&self) -> usize {
        2 * self.dim_half
    }

    pub fn zeros(domain: Arc<DiscreteDomain>, dim_half: usize) -> Self {
        let n = domain.total_nodes() * 2 * dim_half;
        CurveSamples {
            domain,
            dim_half,
            values: vec![0.0; n],
            d_s: vec![0.0; n],
            d_t: vec![0.0; n],
        }
    }

    /// Sample an analytic single-chart curve on a single-patch domain.
    pub fn from_chart_curve(domain: Arc<DiscreteDomain>, curve: &ChartCurve) -> Self {
        let comps = 2 * curve.dim_half;
        let n = domain.total_nodes();
        let mut values = vec![0.0; n * comps];
        let mut d_s = vec![0.0; n * comps];
        let mut d_t = vec![0.0; n * comps];
        for idx in 0..n {
            let (x, y) = domain.z(idx);
            let v = curve.value(x, y);
            let dz = curve.dz(x, y);
            let jdz = j0_vec(&dz);
            for c in 0..comps {
                values[idx * comps + c] = v[c];
                d_s[idx * comps + c] = dz[c];
                d_t[idx * comps + c] = jdz[c];
            }
        }
        CurveSamples {
            domain,
            dim_half: curve.dim_half,
            values,
            d_s,
            d_t,
        }
    }

    /// Sample a chain edge (or all segments of a glued cylinder) from the
    /// geometry's analytic description.
    pub fn from_chain(domain: Arc<DiscreteDomain>, geom: &ChainGeometry) -> Self {
        let comps = 2 * geom.dim_half();
        let n = domain.total_nodes();
        let mut values = vec![0.0; n * comps];
        let mut d_s = vec![0.0; n * comps];
        let mut d_t = vec![0.0; n * comps];
        for pi in 0..domain.num_patches() {
            let p = &domain.patches[pi];
            for ring in 0..p.nr {
                let upper = domain.chart_of(pi, ring) == p.chart_hi;
                for j in 0..p.m {
                    let idx = domain.node_index(pi, ring, j);
                    let rho = domain.rho(idx);
                    let th = p.theta_angle(j);
                    let (x, y) = (rho * th.cos(), rho * th.sin());
                    let (v, dz) = geom.edge_point(p.seg, x, y, upper);
                    let jdz = j0_vec(&dz);
                    for c in 0..comps {
                        values[idx * comps + c] = v[c];
                        d_s[idx * comps + c] = dz[c];
                        d_t[idx * comps + c] = jdz[c];
                    }
                }
            }
        }
        CurveSamples {
            domain,
            dim_half: geom.dim_half(),
            values,
            d_s,
            d_t,
        }
    }

    pub fn as_field(&self) -> SampledField {
        SampledField {
            comps: self.comps(),
            kind: FieldKind::Vector,
            values: self.values.clone(),
            derivs: Some((self.d_s.clone(), self.d_t.clone())),
        }
    }

    /// Re-differentiate the stored values (chart-aware on chains).
    pub fn refresh_derivs(&mut self, atlas: Option<&ChartCycle>) {
        let (ds, dt) = differentiate_chart_aware(
            &self.domain,
            atlas,
            &self.values,
            self.comps(),
            GatherKind::Point,
        );
        self.d_s = ds;
        self.d_t = dt;
    }

    /// Worst mismatch of duplicated seam circles (glued cylinders).
    pub fn seam_defect(&self) -> f64 {
        self.domain.seam_defect(&self.values, self.comps())
    }
}

/// How neighbor data transforms when a stencil crosses a chart boundary.
pub enum GatherKind<'a> {
    /// Curve values: apply the nonlinear chart transition.
    Point,
    /// Tangent vectors along a base curve: apply the transition Jacobian at
    /// the base value.
    Vector { base: &'a [f64] },
}

/// Fetch the data of `node` expressed in `want_chart`.
pub fn value_in_chart(
    dom: &DiscreteDomain,
    atlas: Option<&ChartCycle>,
    data: &[f64],
    comps: usize,
    node: (usize, usize, usize),
    want_chart: usize,
    kind: &GatherKind,
) -> Vec<f64> {
    let (patch, ring, j) = node;
    let idx = dom.node_index(patch, ring, j);
    let own = dom.chart_of(patch, ring);
    let raw: Vec<f64> = data[idx * comps..(idx + 1) * comps].to_vec();
    if own == want_chart {
        return raw;
    }
    let atlas = atlas.expect("multi-chart domain requires an atlas");
    match kind {
        GatherKind::Point => atlas
            .map_point(own, want_chart, &raw)
            .expect("adjacent charts")
            .to_vec(),
        GatherKind::Vector { base } => {
            let base_val: Vec<f64> = base[idx * comps..(idx + 1) * comps].to_vec();
            let jac = atlas
                .jacobian(own, want_chart, &base_val)
                .expect("adjacent charts");
            let mut out = vec![0.0; comps];
            for r in 0..comps {
                for c in 0..comps {
                    out[r] += jac[(r, c)] * raw[c];
                }
            }
            out
        }
    }
}

/// Chart-aware differentiation: spectral in the angle, 4th-order stencils in
/// `tau` (continued across necks), with neighbor data transformed into the
/// center node's chart before differencing.
pub fn differentiate_chart_aware(
    dom: &DiscreteDomain,
    atlas: Option<&ChartCycle>,
    values: &[f64],
    comps: usize,
    kind: GatherKind,
) -> (Vec<f64>, Vec<f64>) {
    if dom.n_charts == 1 {
        return dom.differentiate(values, comps);
    }
    let n = dom.total_nodes();
    let mut ds = vec![0.0; n * comps];
    let mut dt = vec![0.0; n * comps];
    for pi in 0..dom.num_patches() {
        let p = dom.patches[pi].clone();
        let dmat = spectral_diff_matrix(p.m);
        for ring in 0..p.nr {
            let chart = dom.chart_of(pi, ring);
            let (offsets, wts) = dom.radial_stencil(pi, ring);
            for j in 0..p.m {
                let idx = dom.node_index(pi, ring, j);
                let th = p.theta_angle(j);
                let rho = dom.rho(idx);
                let (s, t) = (rho * th.cos(), rho * th.sin());
                let mut dtau = vec![0.0; comps];
                for ((pp, rr), w) in offsets.iter().zip(&wts) {
                    let v = value_in_chart(dom, atlas, values, comps, (*pp, *rr, j), chart, &kind);
                    for c in 0..comps {
                        dtau[c] += w * v[c];
                    }
                }
                // angular stencil stays within one ring (one chart)
                let mut dth = vec![0.0; comps];
                for jj in 0..p.m {
                    let nidx = dom.node_index(pi, ring, jj);
                    for c in 0..comps {
                        dth[c] += dmat[(j, jj)] * values[nidx * comps + c];
                    }
                }
                let r2 = rho * rho;
                for c in 0..comps {
                    ds[idx * comps + c] = (s * dtau[c] - t * dth[c]) / r2;
                    dt[idx * comps + c] = (t * dtau[c] + s * dth[c]) / r2;
                }
            }
        }
    }
    (ds, dt)
}

/// Per-chart almost-complex structure bundle.
#[derive(Debug, Clone)]
pub enum JField {
    Single(AlmostComplexStructure),
    PerChart(Vec<AlmostComplexStructure>),
}

impl JField {
    pub fn at(&self, chart: usize) -> &AlmostComplexStructure {
        match self {
            JField::Single(j) => j,
            JField::PerChart(v) => &v[chart],
        }
    }

    pub fn dim_half(&self) -> usize {
        self.at(0).dim_half
    }
}

/// Cauchy-Riemann residual `du + J(u) du j` as the coefficient field
/// `f = d_s u + J(u) d_t u` sampled on the nodes.
pub fn dbar_residual(u: &CurveSamples, j: &JField) -> Result<SampledField> {
    let comps = u.comps();
    if j.dim_half() != u.dim_half {
        return Err(Error::DomainMismatch(format!(
            "structure dimension {} vs curve dimension {}",
            j.dim_half(),
            u.dim_half
        )));
    }
    let dom = &u.domain;
    let n = dom.total_nodes();
    let mut out = vec![0.0; n * comps];
    for pi in 0..dom.num_patches() {
        let p = &dom.patches[pi];
        for ring in 0..p.nr {
            let chart = dom.chart_of(pi, ring);
            let acs = j.at(chart);
            for jj in 0..p.m {
                let idx = dom.node_index(pi, ring, jj);
                let x = &u.values[idx * comps..(idx + 1) * comps];
                let jm = acs.eval(x);
                for r in 0..comps {
                    let mut v = u.d_s[idx * comps + r];
                    for c in 0..comps {
                        v += jm[(r, c)] * u.d_t[idx * comps + c];
                    }
                    out[idx * comps + r] = v;
                }
            }
        }
    }
    Ok(SampledField::from_values(out, comps, FieldKind::Form))
}

/// Least-squares complex-linear coefficient of `u` around `center`
/// (which must be a zero of the curve in the chart): returns the fitted
/// tangent and the relative fit residual.
pub fn extract_linear_coefficient(
    u: &CurveSamples,
    center: (f64, f64),
    fit_radius: f64,
) -> Result<(Vec<f64>, f64)> {
    let comps = u.comps();
    let dom = &u.domain;
    let mut denom = 0.0;
    let mut acc = vec![0.0; comps];
    let mut count = 0usize;
    let mut used = Vec::new();
    for idx in 0..dom.total_nodes() {
        let (x, y) = dom.z(idx);
        let (wx, wy) = (x - center.0, y - center.1);
        let r2 = wx * wx + wy * wy;
        if r2.sqrt() <= fit_radius {
            count += 1;
            denom += r2;
            let uv = &u.values[idx * comps..(idx + 1) * comps];
            // M^T u with M = (wx I + wy J0): M^T acts as conjugate multiplication
            let mt = cmul_vec(wx, -wy, uv);
            for c in 0..comps {
                acc[c] += mt[c];
            }
            used.push(idx);
        }
    }
    if count < 8 {
        return Err(Error::invalid(format!(
            "only {count} nodes inside fit radius {fit_radius}"
        )));
    }
    let a: Vec<f64> = acc.iter().map(|v| v / denom).collect();
    // relative residual
    let mut num = 0.0;
    let mut den = 0.0;
    for idx in used {
        let (x, y) = dom.z(idx);
        let (wx, wy) = (x - center.0, y - center.1);
        let model = cmul_vec(wx, wy, &a);
        let uv = &u.values[idx * comps..(idx + 1) * comps];
        for c in 0..comps {
            num += (uv[c] - model[c]).powi(2);
            den += uv[c].powi(2);
        }
    }
    let resid = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    Ok((a, resid))
}

/// Local-expansion check report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    pub residual_sup: f64,
    pub annulus: (f64, f64),
    pub nodes_checked: usize,
}

/// Sup over the annulus `A(r^{4/3}, r^{2/3})` of
/// `|u(z) - a0 z - a1 r^2/z|`, on a single-patch domain around the neck.
pub fn expansion_check(
    u: &CurveSamples,
    a0: &[f64],
    a1: &[f64],
    r: f64,
) -> Result<ExpansionReport> {
    let lo = r.powf(4.0 / 3.0);
    let hi = r.powf(2.0 / 3.0);
    let comps = u.comps();
    let mut sup = 0.0_f64;
    let mut count = 0usize;
    for idx in 0..u.domain.total_nodes() {
        let rho = u.domain.rho(idx);
        if rho < lo || rho > hi {
            continue;
        }
        count += 1;
        let (x, y) = u.domain.z(idx);
        let t0 = cmul_vec(x, y, a0);
        let d = x * x + y * y;
        let t1 = cmul_vec(r * r * x / d, -r * r * y / d, a1);
        let uv = &u.values[idx * comps..(idx + 1) * comps];
        let mut m = 0.0;
        for c in 0..comps {
            let e = uv[c] - t0[c] - t1[c];
            m += e * e;
        }
        sup = sup.max(m.sqrt());
    }
    if count == 0 {
        return Err(Error::DomainMismatch(
            "expansion annulus not covered by the domain".into(),
        ));
    }
    Ok(ExpansionReport {
        a0: a0.to_vec(),
        a1: a1.to_vec(),
        residual_sup: sup,
        annulus: (lo, hi),
        nodes_checked: count,
    })
}

/// Symmetric Hausdorff distance between two sampled images in `R^{2n}`.
pub fn hausdorff_distance(u1: &CurveSamples, u2: &CurveSamples) -> Result<f64> {
    if u1.values.is_empty() || u2.values.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    if u1.dim_half != u2.dim_half {
        return Err(Error::DomainMismatch("image dimensions differ".into()));
    }
    let comps = u1.comps();
    let one_sided = |a: &[f64], b: &[f64]| -> f64 {
        let na = a.len() / comps;
        let nb = b.len() / comps;
        let mut worst = 0.0_f64;
        for i in 0..na {
            let mut best = f64::INFINITY;
            let pa = &a[i * comps..(i + 1) * comps];
            for k in 0..nb {
                let pb = &b[k * comps..(k + 1) * comps];
                let mut d = 0.0;
                for c in 0..comps {
                    d += (pa[c] - pb[c]).powi(2);
                    if d >= best {
                        break;
                    }
                }
                best = best.min(d);
            }
            worst = worst.max(best);
        }
        worst.sqrt()
    };
    Ok(one_sided(&u1.values, &u2.values).max(one_sided(&u2.values, &u1.values)))
}

/// Weighted sup metric on maps from the same glued cylinder:
/// `sup_k 2^{-k} sup_{|y| <= k} |u1 - u2|`, with `y` the signed periodic
/// axial coordinate measured from the window origin.
pub fn cylinder_distance(u1: &CurveSamples, u2: &CurveSamples) -> Result<f64> {
    if !Arc::ptr_eq(&u1.domain, &u2.domain) {
        return Err(Error::DomainMismatch(
            "cylinder distance needs a shared domain".into(),
        ));
    }
    if u1.domain.kind != DomainKind::GluedCylinder {
        return Err(Error::DomainMismatch("not a glued cylinder".into()));
    }
    let comps = u1.comps();
    let period = u1.domain.cylinder_period();
    let mut worst = 0.0_f64;
    for idx in 0..u1.domain.total_nodes() {
        let mut y = u1.domain.cylinder_y(idx) % period;
        if y > period / 2.0 {
            y -= period;
        }
        let k = y.abs().ceil().max(1.0);
        let mut d = 0.0;
        for c in 0..comps {
            d += (u1.values[idx * comps + c] - u2.values[idx * comps + c]).powi(2);
        }
        worst = worst.max(2.0_f64.powf(-k) * d.sqrt());
    }
    Ok(worst)
}

/// JSON node dump for cross-run comparisons.
#[derive(Debug, Serialize, Deserialize)]
pub struct CurveDump {
    pub dim_half: usize,
    pub kind: String,
    pub nodes: usize,
    pub values: Vec<f64>,
    pub d_s: Vec<f64>,
    pub d_t: Vec<f64>,
}

impl CurveSamples {
    pub fn dump_json(&self) -> Result<String> {
        let dump = CurveDump {
            dim_half: self.dim_half,
            kind: format!("{:?}", self.domain.kind),
            nodes: self.domain.total_nodes(),
            values: self.values.clone(),
            d_s: self.d_s.clone(),
            d_t: self.d_t.clone(),
        };
        Ok(serde_json::to_string(&dump)?)
    }
}
