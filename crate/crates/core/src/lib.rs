//! Long-time asymptotic expansions of decaying solutions of the incompressible
//! Navier-Stokes equations on the periodic box `[0, 2π]^3`.
//!
//! The crate computes the coefficients `ξ_n` of an expansion
//! `u(t) ~ Σ ξ_n ψ_{λ_n}(t)` from the expansion of the force, integrates the
//! Galerkin-truncated equations, and checks numerically that the remainders
//! decay at the predicted rates.
//!
//! - [`spectral`]: fields, Stokes multipliers, Leray projection, `B(u, v)`.
//! - [`decay`]: the rate families `ψ_λ` and their exponent algebra.
//! - [`lattice`]: closure of generator sets under that algebra.
//! - [`expansion`]: the coefficient recursion.
//! - [`solver`]: exponential Runge-Kutta integration with an energy ledger.
//! - [`verify`]: remainder fits, manufactured forces and the analytic checks.
//! - [`harness`]: versioned experiment configs and reports.

pub mod decay;
pub mod expansion;
pub mod harness;
pub mod lattice;
pub mod solver;
pub mod spectral;
pub mod verify;
