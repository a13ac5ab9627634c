//! One-dimensional reaction-drift-diffusion by dynamic-lattice first-passage kinetic Monte Carlo.

// Negated comparisons deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod domains;
pub mod engine;
pub mod error;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod potential;
pub mod presets;
pub mod rates;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
