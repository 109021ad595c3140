//! Point clouds, spatial queries, seeding and synthetic shapes.

mod cloud;
mod frame;
mod grid;
mod index;
pub mod kdtree;
mod seed;
pub mod synth;

pub use cloud::{PointCloud, Vec3};
pub use frame::LocalFrame;
pub use grid::HashGrid;
pub use index::{build_index, estimate_tau_p, nn_distances, SpatialIndex};
pub use seed::{poisson_seed, stride_seed, SeedSet};
pub use synth::{synth_shape, ShapeKind};
