//! The dual-stream separation network and its checkpoint format.

mod alanet;
pub mod checkpoint;
mod config;
mod perception;

pub use alanet::{Alanet, LayerPrediction, Prediction};
pub use config::{ModuleFlags, NetworkConfig, LEVELS};
pub use perception::{PerceptionBranch, PerceptionEncoder};
