//! Numerical laboratory for the relative isoperimetric problem inside an
//! unbounded convex body `C = (Σ×ℝ) ∩ {x·e₁ ≥ φ(t)}` built over a circular cone.
//!
//! The crate is organised bottom-up:
//!
//! * [`cones`]: exact geometry of the cone `Σ`, its sections and the wedge `Σ×ℝ`,
//!   including the closed-form wedge profile.
//! * [`phi`]: construction of the convex profile `φ` from a rate `h` by solving
//!   `φ′ = −h̃(φ)` and extending affinely to negative times.
//! * [`domain`]: the body itself plus the reference domains (wedge, truncated
//!   cylinder, half-space, free space) and their voxelization.
//! * [`edt`] and [`measures`]: volume, relative perimeter, the enlargement flow
//!   `E_r` and the perimeter-growth inequalities along it.
//! * [`optimize`]: upper bounds on isoperimetric profiles via parametric seeds and
//!   volume-preserving simulated annealing.
//! * [`analysis`]: concavity, ordering, threshold detection, diameter reports,
//!   slope-constant estimation and the escape experiment.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cones;
pub mod domain;
pub mod edt;
pub mod error;
pub mod measures;
pub mod optimize;
pub mod phi;
pub mod quad;
pub mod tables;

pub use error::{Error, Result};

/// Crate version, embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
