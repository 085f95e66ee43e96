//! Simulation-based damage classification for vibrating structures.
//!
//! A plane-stress finite-element model of a frame is reduced with proper
//! orthogonal decomposition, the reduced model generates labelled sensor
//! recordings under random loads and damage states, and a fully
//! convolutional network learns to localize damage from them.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fcn;
pub mod fem;
pub mod integrator;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod reduction;
pub mod sampling;

pub use error::{Error, Result};

// Compiles and runs the book's code listings with `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/structural-model.md")]
    mod structural_model {}
    #[doc = include_str!("../../../book/src/time-integration.md")]
    mod time_integration {}
    #[doc = include_str!("../../../book/src/model-reduction.md")]
    mod model_reduction {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    mod classifier {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/artifacts.md")]
    mod artifacts {}
}
