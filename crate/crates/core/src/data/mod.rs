//! Datasets: in-memory handles, the synthetic shape-world benchmark,
//! rare-class sampling, and cross-domain class mixing.

mod dacs;
mod dataset;
mod sampler;
mod toyworld;

pub use dacs::dacs_mix;
pub use dataset::{DatasetHandle, DatasetRole, DatasetStats, MIN_PRESENCE_PIXELS};
pub use sampler::{rare_class_weights, sample_source};
pub use toyworld::{generate_toy_world, DomainShift, DomainSplits, ToyWorldSpec};
