//! Multistrain, multipatch SIS dynamics with superinfection.
//!
//! The crate computes the globally stable equilibrium of the patch model
//! from its parameters alone, by eliminating strains from the most to the
//! least virulent. Each elimination step solves a linear system for the
//! limiting total population of every patch, builds a Metzler threshold
//! matrix whose stability modulus decides whether the strain persists, and
//! solves the patch-coupled Lotka–Volterra equilibrium for its level. The
//! levels feed back into effective birth and death rates for the next step.
//!
//! Forward integration of the full system ([`simulate`]) and an independent
//! single-patch reproduction-number cascade ([`singlepatch`]) are provided to
//! check the predictions.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cascade;
pub mod linalg;
mod math;
pub mod model;
pub mod simulate;
pub mod singlepatch;

pub use cascade::{run_cascade, CascadeError, CascadeReport, EquilibriumPoint, StrainVerdict};
pub use linalg::{stability_modulus, SquareMatrix, StabilityResult};
pub use model::{ModelParameters, StateVector, Violation};
pub use simulate::{integrate, IntegratorConfig, Trajectory, TrajectoryStatus};
