//! Monte-Carlo laboratory for the Ornstein–Uhlenbeck semigroup on Brownian
//! path space and its Stein operator.
//!
//! Paths are continuous piecewise-linear functions on dyadic grids
//! ([`paths`]); Brownian motion is built from the Schauder basis
//! ([`schauder`]); functionals carry exact derivatives and growth constants
//! ([`functionals`]). On top of these sit the semigroup and its probes
//! ([`semigroup`]), the Stein operator and solution ([`stein`]), and the
//! strong-continuity counterexample ([`counterexample`]).

// NaN-rejecting `!(x > 0.0)` checks and index loops over small matrices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod counterexample;
pub mod error;
pub mod functionals;
pub mod mc;
pub mod paths;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod schauder;
pub mod semigroup;
pub mod stein;
pub mod suite;

pub use error::{Error, Result};
pub use functionals::{
    by_name, Cylinder, FDSpec, Functional, GrowthConstants, LinearStat, REGISTRY,
};
pub use mc::{MCEstimate, MCSpec};
pub use paths::Path;
pub use quadrature::QuadratureSpec;
pub use stein::SteinReport;
