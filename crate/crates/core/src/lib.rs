//! Language-guided single-image reflection removal at desk scale.
//!
//! The crate is organised bottom-up: [`graph`] provides the tensor tape with
//! reverse-mode gradients, [`lang`] turns captions into per-level language
//! features, [`attention`] holds the language-aware attention modules,
//! [`network`] assembles the dual-stream separation network, [`synth`] and
//! [`ppm`] produce and store training pairs, [`caption`] corrupts and scores
//! captions, and [`train`] holds losses, the optimizer and image metrics.

#![forbid(unsafe_code)]

pub mod attention;
pub mod caption;
mod csv_out;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod lang;
pub mod layers;
pub mod network;
pub mod params;
pub mod ppm;
pub mod suite;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{BinaryOp, Graph, PoolMode, Var};
pub use tensor::Tensor;
