//! Core engine for student-teacher domain-adaptive semantic segmentation.
//!
//! Everything in this crate is pure computation over owned buffers: the token
//! encoder and upsampling decoder with hand-written backward passes, the
//! EMA student-teacher training loop, pseudo-label generation, class-mix
//! augmentation, rare-class sampling, the synthetic shape-world datasets, and
//! the confusion-matrix metrics. File formats, wall-clock benchmarking, and
//! the CLI live in the companion `adaseg` crate.
//!
//! The crate is `no_std`-compatible (with `alloc`); the default `std` feature
//! only enables runtime SIMD detection in the matrix-multiply kernels.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod config;
pub mod data;
pub mod domain;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod schedule;
pub mod store;
pub mod tensor;
pub mod uda;

pub use config::{MaskingMode, RunKind, TrainConfig};
pub use domain::{DomainTag, ImageSample, PseudoLabel, SegMap, IGNORE};
pub use error::Error;
pub use metrics::{ConfusionMatrix, EvalReport};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Result<T> = core::result::Result<T, Error>;
