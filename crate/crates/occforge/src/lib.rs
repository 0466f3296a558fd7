//! Toy-scale monocular semantic occupancy prediction.
//!
//! A fully differentiable sparse-to-dense pipeline: depth-based voxel
//! queries, deformable attention feature lifting, mask-token scene
//! completion, image-conditioned refinement, and privileged-branch
//! distillation, trained on procedurally generated synthetic scenes.
//! Everything runs in f64 on the CPU so that gradients can be verified
//! against central finite differences and attention against naive
//! loop oracles.

pub mod attention;
pub mod autodiff;
pub mod config;
mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod pipeline;
pub mod reference;
pub mod scenes;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
