//! Proper orthogonal decomposition and Galerkin reduced-order models.

mod pod;
mod rom;

pub use pod::{incremental_pod, max_column_residual, pod, reconstruction_error, truncation_rank, PodBasis};
pub use rom::{lift, project, reconstruction_report, ChannelError, ReconstructionReport, RomArrays};
