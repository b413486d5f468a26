pub mod active_learning;
pub mod benchmarks;
pub mod cli;
pub mod distribution;
pub mod error;
pub mod gp;
pub mod sampling;

pub use error::{Error, Result};
