//! Numerical lab for interface generation in the degenerate bistable
//! problem `u_t = Δ(u^m) + ε⁻² f(u)`.
//!
//! The solver advances the PDE by explicit finite volumes with Strang
//! splitting; the envelope module builds the sub- and super-solutions
//! `w±` from the reaction ODE flow, and `verify` compares the two.

pub mod config;
pub mod envelope;
pub mod error;
pub mod geometry;
pub mod ode;
pub mod reaction;
pub mod runner;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
