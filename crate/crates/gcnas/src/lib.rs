//! Few-shot graph neural architecture search with gradient-contribution
//! supernet partitioning.
//!
//! The crate trains a weight-sharing supernet of message-passing and
//! global-attention modules on synthetic node-classification tasks, splits
//! it into sub-supernets by decomposing each layer's backpropagated
//! gradient into per-module contributions (cosine similarity + minimum
//! cut), and searches subnets with genetic or differentiable strategies.
//!
//! Entry points:
//! - [`autodiff`]: retained-tape reverse-mode AD with per-source VJP extraction
//! - [`data`]: synthetic stochastic-block-model datasets and their binary format
//! - [`model`]: the module zoo and layer fusion
//! - [`supernet`]: dense training, subnet sampling, sub-supernet derivation
//! - [`gc`]: gradient-contribution collection, similarity, minimum cuts
//! - [`ga`] / [`darts`]: the two search strategies
//! - [`harness`]: experiment protocols, rank statistics, reports, CLI support
//!
//! Each major capability also ships as a runnable example; see `examples/`.

pub mod autodiff;
pub mod data;
pub mod darts;
pub mod error;
pub mod ga;
pub mod gc;
pub mod harness;
pub mod model;
pub mod stats;
pub mod supernet;

pub use error::{Error, Result};
