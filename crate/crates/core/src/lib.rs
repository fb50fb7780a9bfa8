//! Constructive Livšic theory over hyperbolic toral automorphisms.
//!
//! The crate builds cocycles over linear Anosov maps of `T^d` with values in
//! vector groups, matrix Lie groups and `Diff(S¹)`, checks the periodic orbit
//! obstruction exactly on enumerated periodic orbits, constructs transfer
//! functions by propagation along a long exact orbit, and measures the
//! localization, Hölder and distortion quantities that control the theory.

// `!(x <= tol)` is deliberate throughout: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circle_diffeo;
pub mod cocycles;
pub mod conformal;
pub mod error;
pub mod fixtures;
pub mod groups;
pub mod lattice;
pub mod linalg;
pub mod livsic;
pub mod periodic;
pub mod perturbed;
pub mod torus;

pub use error::{Error, ErrorFamily, Result};
pub use torus::{torus_distance, ToralAutomorphism, TorusPoint};
