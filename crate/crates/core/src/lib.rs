//! Normal-vector-assisted dual-sided voxel mapping for LiDAR odometry.
//!
//! The crate covers the whole experiment loop: per-point normal estimation,
//! the dual-sided voxel map with LRU retention, normal-gated scan-to-map
//! registration, a ray-casting LiDAR simulator with thin-wall scenes, and the
//! trajectory / wall-thickness / timing metrics.

pub mod ablation;
pub mod dataset;
pub mod evaluation;
pub mod geometry;
pub mod kdtree;
pub mod normals;
pub mod odometry;
pub mod ply;
pub mod registration;
pub mod registry;
pub mod simulator;
pub mod trajectory;
pub mod voxelmap;
