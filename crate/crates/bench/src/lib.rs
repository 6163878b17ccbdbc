//! Data generators, bound checks, experiments and the `leading` CLI.

pub mod bounds;
pub mod config;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod runner;
pub mod setup;

pub use error::{BenchError, Result};
