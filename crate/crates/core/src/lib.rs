//! Modified Hopf manifolds of delay differential equations
//!
//! ```text
//! x'(t) = f(x(t), x(t - tau_1), ..., x(t - tau_m), alpha),   tau_i = tau_i(x(t), alpha)
//! ```
//!
//! A modified Hopf point is a steady state whose leading complex pair of
//! characteristic roots sits at a prescribed real part `sigma`. This crate
//!
//! * finds steady states ([`steady`]) and characteristic roots ([`spectrum`]),
//! * solves the augmented defining system for modified Hopf points, assembles
//!   its transposed Jacobian block by block and continues the manifold ([`hopf`]),
//! * computes the unit normal of the manifold in parameter space and the
//!   closest boundary point to a nominal parameter ([`normalvec`]),
//! * checks all of the above against independent finite-difference and
//!   nullspace oracles ([`verify`]).
//!
//! Delays must be twice continuously differentiable near the solutions
//! considered; the second derivatives of `f` enter the Jacobian.

pub mod error;
pub mod hopf;
pub mod model;
pub mod normalvec;
pub mod numkernel;
pub mod serial;
pub mod spectrum;
pub mod steady;
pub mod verify;

pub use nalgebra;
pub use num_complex;

pub use error::{Error, Result};
pub use hopf::{
    assemble_b, assemble_b_at, continue_manifold, find_hopf, residual, solve_hopf, BMatrix,
    ContinuationOptions, ContinuationRun, HopfPoint, HopfSeed, HopfSolution, TrigWeights,
};
pub use model::{bundle_derivatives, evaluate_rhs, DerivativeBundle, ModelSpec, Provider};
pub use normalvec::{
    closest_boundary_point, normal_vector, normal_vector_on, ClosestPoint, NormalVector,
};
pub use spectrum::{char_roots, leading_pair, CharRoot, Spectrum};
pub use steady::{solve_steady, SteadyPoint};
pub use verify::{Check, VerificationReport};
