//! Durable-goods monopoly laboratory for goods that buyers can freely discard
//! and sellers can copy at no cost.
//!
//! Modules, bottom up: [`model`] (primitives and buyer utility),
//! [`static_mech`] (commitment benchmarks), [`paths`] (dynamic equilibrium
//! constructions), [`coase_solver`] (weak-Markov dynamics with a fixed
//! allocation), [`discrete`] (finite-type games), [`verify`] (audits),
//! and [`cli`] (the `dmono` front end).

// `!(a > b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coase_solver;
pub mod config;
pub mod discrete;
pub mod error;
pub mod model;
pub mod paths;
pub mod presets;
pub mod quad;
pub mod static_mech;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Primitives, TypeDistribution, ValueFunction};
