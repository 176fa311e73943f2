//! Binary neural networks for visual place recognition: bit-packed
//! XNOR-popcount inference, straight-through-estimator training at desk
//! scale, descriptor matching, and the accounting suite for model size,
//! MACs and memory efficiency.

pub mod bitcore;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod quant;
pub mod train;
pub mod vpr;

pub use error::{Error, Result};
