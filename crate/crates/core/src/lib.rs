//! Leading prediction strategies built by defensive forecasting.
//!
//! A leading strategy is a forecaster whose loss, compared with the loss of
//! any benchmark strategy of moderate norm in a reproducing kernel Hilbert
//! space, is determined by how far the benchmark's predictions are from the
//! leader's own. The crate provides
//!
//! - [`protocol`]: situations, strategies, order-k windows and the on-line
//!   protocol driver producing a [`protocol::Trace`];
//! - [`kernels`]: situation kernels, Gram matrices and kernel expansions;
//! - [`losses`]: Bregman divergences and strictly proper scoring rules;
//! - [`engine`]: the defensive-forecasting potential and the two round rules;
//! - [`leaders`]: the four assembled leaders and their benchmark links.

pub mod engine;
pub mod error;
pub mod kernels;
pub mod leaders;
pub mod losses;
pub mod protocol;
mod roots;

pub use error::{Error, Result};
