//! Reference solutions for validating the stochastic engine.

pub mod analytic;
pub mod lattice;
pub mod master;
pub mod pde;
