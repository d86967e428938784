//! Deterministic core of a LiDAR 3D detection pipeline.
//!
//! Everything around the neural network of a voxel-based 3D detector, as a
//! plain library: multi-sweep point-cloud handling, geometric augmentation,
//! sparse voxelization, inverse-distance feature interpolation, point-level
//! auxiliary supervision losses with analytic gradients, class-balanced
//! sampling and ground-truth paste augmentation, yaw-aware multi-group NMS,
//! and the full center-distance detection scoring suite (per-class AP, TP
//! error metrics, composite detection score).
//!
//! All operations are deterministic: randomized steps take an explicit seed
//! and produce byte-identical outputs across runs.

pub mod augment;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod interp;
pub mod losses;
pub mod nms;
pub mod pointcloud;
pub mod render;
pub mod sampling;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};
pub use geometry::{Box3D, DetClass, Point3};
pub use pointcloud::PointCloud;
