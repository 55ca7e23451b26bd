//! Pairwise graph interaction learning with co-attention graph pooling.
//!
//! The crate bundles a small reverse-mode autodiff engine, a GCN encoder,
//! co-attention pooling and its baselines, exact graph edit distance,
//! ranking metrics, a negative sampler, training and benchmarking.

pub mod bench;
pub mod cli;
pub mod error;
pub mod gcn;
pub mod ged;
pub mod gradcheck;
pub mod graph;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod pooling;
pub mod sampler;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
