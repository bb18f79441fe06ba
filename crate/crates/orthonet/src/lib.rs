//! Numerical laboratory for triply orthogonal systems of surfaces and their
//! transformation theory.
//!
//! The crate represents a triply orthogonal system by its sampled data on a
//! rectilinear grid — the immersion `f`, signed Lamé coefficients `H_i` with
//! `∂_i f = H_i N_i`, unit normals `N_i`, and rotational coefficients
//! `β_ij = (1/H_i) ∂_i H_j` — and provides:
//!
//! - residual checks for the structure equations (orthogonality, the Lamé
//!   system, point equations, the Guichard condition),
//! - Combescure transformations, including the associated system and the
//!   dual system of a Guichard net and the algebra connecting them,
//! - coordinate-surface geometry: induced metric data, principal curvatures,
//!   G-surface and Ω-surface checks, surface duals, and Demoulin's relation,
//! - Ribaucour and Bäcklund transformations with their permutability
//!   identities, built on a fourth-order linear ODE march,
//! - a catalog of closed-form reference systems used as test charts.
//!
//! All checks report sup/RMS residuals with grid-aware tolerances instead of
//! booleans alone, so failures stay diagnosable.

// Axis and component indices are semantic throughout (they feed
// `complement`, `EPSILON`, and parallel per-axis arrays), so indexed loops
// read better than iterator chains here.
#![allow(clippy::needless_range_loop)]

pub mod catalog;
pub mod combescure;
pub mod error;
pub mod grid;
pub mod guichard;
mod numerics;
pub mod report;
pub mod ribaucour;
pub mod surface;
pub mod tos;

pub use error::{Error, Result};
pub use grid::{FdOrder, GridSpec, OneForm, ScalarField, VectorField};
pub use report::{CheckOpts, GridSummary, ResidualReport};
pub use tos::{OrthogonalSystem, Rotations, EPSILON};
