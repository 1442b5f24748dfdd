//! Numerical toolkit for vortices in superconductors with a periodic array of
//! small pinning inclusions.
//!
//! The crate is organized around one experiment: place a type-II superconducting
//! sample `Ω` in an applied field `h_ex`, dilute its Ginzburg-Landau coupling on
//! a lattice of tiny inclusions (the pinning term `a`), and ask where vortices
//! appear, how many, with which degrees, and at which applied fields the count
//! jumps.  The modules answer that question twice over: once through asymptotic
//! reduced models (London solution, renormalized interaction energies at the
//! macro / meso / micro scales, a critical-field ladder), and once by direct
//! minimization of the full energy on a desk-scale grid so the two can be
//! compared defect by defect.
//!
//! Module map:
//! - [`domain`], [`grid`], [`field`], [`ops`], [`solve`], [`io`]: masked-grid
//!   finite differences, Dirichlet/Neumann Poisson solvers, field storage and
//!   raw dumps.
//! - [`pinning`]: the inclusion lattice, the scalar modulus profile `U` and the
//!   energy splitting `E(Uv) = E(U) + F(v)`.
//! - [`london`]: the screened-field solution `ξ0`, its minima `Λ`, the vortex
//!   interaction potential `ζ`.
//! - [`renorm`]: renormalized energies — macroscopic point-vortex energy,
//!   mesoscopic cluster expansion around a minimum of `ξ0`, microscopic
//!   single-vortex energy inside one inclusion.
//! - [`critical`]: energy tables over degree assignments, the ladder of
//!   critical fields, and the vortex-count predictor.
//! - [`gl`]: the full reduced Ginzburg-Landau energy, gauge handling, and the
//!   gradient-flow minimizer.
//! - [`vortex`]: defect detection, degrees, disk separation, and comparison of
//!   observed defects against the reduced-model prediction.

pub mod domain;
pub mod field;
pub mod grid;
pub mod io;
pub mod ops;
pub mod solve;

pub mod critical;
pub mod gl;
pub mod london;
pub mod pinning;
pub mod renorm;
pub mod vortex;

mod error;

pub use error::{Error, Result};
pub use domain::{DomainSpec, Point2, Shape};
pub use field::{ComplexField, ScalarField, VectorField};
pub use grid::{build_grid, Grid};
