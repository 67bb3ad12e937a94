//! Tabular and deep learners that split the action-value
//! into a short truncated return plus a shifted tail, with exact references
//! for checking them.

pub mod chain;
pub mod deep;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod oracle;
pub mod qtable;
pub mod rng;
pub mod tabular;

pub use error::{Error, Result};
