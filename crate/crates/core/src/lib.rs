//! Welfarist allocation of divisible items under per-agent diversity constraints.
//!
//! The crate computes allocations maximizing `sum_i f(V_i)` for a family of
//! concave welfare functions, with agents allowed to impose linear constraints on
//! their own bundle, and audits how such constraints move other agents' values
//! (negative externality) and the constraining agent's own value (monotonicity).

pub mod audit;
pub mod checks;
pub mod cli;
pub mod error;
pub mod exec;
pub mod forge;
pub mod lp;
pub mod model;
pub mod solver;
pub mod welfare;

pub use error::{Error, Result};
