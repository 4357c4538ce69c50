//! Point-cloud shape completion with implicit occupancy functions.
//!
//! A partial, self-occluded point cloud is encoded by a small transformer
//! backbone into the *weights* of a multilayer perceptron `g(p) -> (0, 1)`
//! that scores how likely a 3D point belongs to the complete object. The
//! completed shape is then extracted at any resolution by pushing random
//! candidates down the gradient of `-log g` and keeping those that cross a
//! confidence threshold.
//!
//! Module map:
//!
//! - [`geometry`]: points, clouds, normalization, FPS, kNN, voxel grids,
//!   Jaccard similarity and PLY I/O.
//! - [`implicit`]: the occupancy MLP, its forward pass and analytic
//!   gradients (with respect to the input point and to its own weights).
//! - [`sampler`]: the gradient-based sampler and the dense grid baseline.
//! - [`encoder`]: the hypernetwork backbone and its reverse-mode gradients.
//! - [`data`]: procedural shapes, z-buffer partial views and query batches.
//! - [`pipeline`]: training, reconstruction, evaluation and benchmarks.

pub mod autodiff;
pub mod data;
pub mod encoder;
mod error;
pub mod geometry;
pub mod implicit;
pub mod pipeline;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use geometry::{Aabb, Point3, PointCloud, Transform, VoxelGrid};
pub use implicit::{ImplicitParams, MlpArch};
pub use sampler::{SampleReport, SamplerConfig};
