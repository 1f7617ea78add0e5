//! Power flow on balanced radial networks whose lines share a common R/X ratio.
//!
//! After the homogeneous rotation `p̃ = p − κq`, `q̃ = q + κp` the active
//! equations become a linear system on the tree and the reactive equations
//! reduce to a monotone fixed-point problem in the squared voltage
//! magnitudes `v`. Three independent solvers live here:
//!
//! - [`fixed_point`]: monotone iteration `v ← g(v)` started from the upper
//!   bound `v_max = 1 + 2 L_red⁻¹ q̃`.
//! - [`relaxation`]: log-barrier maximisation of `Σ wᵢ log vᵢ` subject to
//!   `g(v) ≥ v`.
//! - [`energy`]: guarded damped Newton on an energy function in
//!   `(log v, θ)` over its domain of convexity.
//!
//! For a solvable instance all three land on the same high-voltage
//! solution; for an unsolvable one all three report infeasibility.
//! [`analysis`] holds the Jacobian, sensitivity and continuation tools and
//! [`oracle`] the closed-form and brute-force references used in tests.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![warn(missing_debug_implementations)]
// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod energy;
mod error;
pub mod fixed_point;
pub mod homogeneous;
pub mod linalg;
mod math;
pub mod network;
pub mod oracle;
pub mod relaxation;

pub use error::{DomainViolation, Error, ValidationError};
pub use homogeneous::{
    LineFlows, Method, PFSolution, Problem, TransformedSystem, VoltageProfile,
};
pub use network::{Injections, Line, RadialNetwork, ReducedLaplacian};

/// Coarse classification shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    /// A power flow solution was found and verified.
    Solved,
    /// The solver produced a certificate that no solution exists.
    Infeasible,
    /// The solver stopped without a conclusion (iteration cap, numerical trouble).
    Inconclusive,
}
