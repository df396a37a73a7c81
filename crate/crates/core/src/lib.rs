//! Quantized distributed optimization with adaptive grids.
//!
//! This crate simulates distributed iterative algorithms of the form
//! `x <- A(c, x)`, `c_i <- C_i(x)` that contract linearly toward a fixed
//! point, and studies what happens when the communicated vectors `c_i`
//! are quantized to `b` bits per dimension on a shrinking grid. The grid
//! is centered at the previously decoded message and its radius decays
//! geometrically, which preserves linear convergence with a handful of
//! bits per iteration.
//!
//! The crate is organized as:
//!
//! - [`quantizer`]: the component-wise grid quantizer and its bit-exact
//!   index packing,
//! - [`framework`]: the [`framework::AlgorithmModel`] contract, exact and
//!   quantized run loops, and closed-form iteration/bit budgets,
//! - [`linalg`] / [`graph`]: small dense symmetric eigen machinery,
//!   Laplacians and the consensus norm used by dual decomposition,
//! - [`algorithms`]: decentralized gradient, projected gradient, and dual
//!   decomposition instances of the contract,
//! - [`problems`]: logistic regression and quadratic objectives with
//!   per-node sharding,
//! - [`channel`]: transmission-rate models, delay mapping, and lossy-link
//!   retransmission analysis and simulation.

pub mod algorithms;
pub mod channel;
pub mod error;
pub mod framework;
pub mod graph;
pub mod linalg;
pub mod problems;
pub mod quantizer;
pub mod rng;

pub use error::{Error, Result};
