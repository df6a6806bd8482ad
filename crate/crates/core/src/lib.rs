//! Gravitational pivoting toolkit: a pivot simulator, synthetic tactile
//! sensing, ground-truth annotation filters, recurrent and sliding-window
//! angle/velocity estimators trained from scratch, the grip controller, and
//! the evaluation studies built on them.

pub mod controller;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod filters;
pub mod nn;
pub mod rng;
pub mod sim;
pub mod tactile;

pub use error::{Error, Result};
