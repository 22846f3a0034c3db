//! Desk-scale numerical laboratory for gluing pseudo-holomorphic curves.
//!
//! The crate builds explicit approximate solutions that blend two (or a
//! periodic chain of) holomorphic curves through a neck of radius `r`,
//! measures their Cauchy-Riemann residuals in weighted Sobolev norms on
//! log-polar grids, assembles the linearized operators together with
//! spliced approximate right inverses, and runs Newton-Kantorovich
//! correction (optionally with prescribed point values) to land on true
//! zeroes of the nonlinear operator.
//!
//! Modules mirror the pipeline:
//! - [`acs`]: almost-complex structures on flat charts (standard, bump
//!   perturbations, radial flattening near a point).
//! - [`cutoff`]: logarithmic cutoff functions and their integral identities.
//! - [`domain`]: log-polar grids for annuli, sphere charts and glued
//!   cylinders; quadrature; plain and windowed `L^p`/`W^{1,p}` norms.
//! - [`curves`]: sampled curves, residual evaluation, tangent extraction,
//!   local expansions, image distances.
//! - [`glue`]: the five-region blended family `u^r`, intermediate curves,
//!   and periodic chain gluing with optional kernel deformations.
//! - [`linop`]: assembled linearizations, minimum-norm right inverses,
//!   spliced approximate inverses and their Neumann correction.
//! - [`solver`]: Newton correctors, with and without point constraints.
//! - [`lab`]: batch experiments, JSON/CSV reports, and the `lab` CLI glue.

pub mod acs;
pub mod chart;
pub mod curves;
pub mod cutoff;
pub mod domain;
pub mod error;
pub mod glue;
pub mod lab;
pub mod linop;
pub mod solver;
pub mod stencil;

pub use error::{Error, Result};
