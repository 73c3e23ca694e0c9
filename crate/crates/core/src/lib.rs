//! Communication-efficient distributed learning of integer exponential
//! family models over tree-structured graphical models.
//!
//! Learners fit k-bit integer parameters with exact integer inference and
//! synchronize through a coordinator by floored averaging, either
//! periodically or only when a local divergence condition is violated.

pub mod cli;
pub mod energy;
pub mod error;
pub mod graph;
pub mod inference;
pub mod intmodel;
pub mod learning;
pub mod rational;
pub mod simulator;
pub mod sync;

pub use error::{Error, Result};
