//! Local probing field (LPF) shape analysis for point clouds.
//!
//! A cloud is covered by local probing fields: planar sampling patterns
//! whose points are mapped onto the shape by an as-orthogonal-as-possible
//! probe. The fields' poses and a sparse dictionary over their deformation
//! vectors are optimized jointly; the learned representation then drives
//! resampling and denoising.

pub mod config;
pub mod denoise;
pub mod error;
pub mod geom;
pub mod io;
pub mod lpf;
pub mod metrics;
pub mod pattern;
pub mod resample;
pub mod rigid;
pub mod rng;
pub mod sparse;

pub use error::{LpfError, Result};
