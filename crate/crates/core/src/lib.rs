//! Scene-coordinate-regression relocalization for LiDAR-style point clouds.
//!
//! A frozen backbone turns each frame into per-point features and a global
//! feature. A two-level place classifier on the global feature produces a
//! guidance vector that conditions a coordinate regressor; RANSAC over the
//! predicted 3D-3D correspondences yields the pose. Training can drop
//! redundant frames for part of the schedule, and localization results can
//! be fused with drifting odometry in a Kalman filter.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backbone;
pub mod error;
pub mod formats;
pub mod fusion;
pub mod geometry;
pub mod nn;
pub mod rsd;
pub mod scene;
pub mod scg;
pub mod solver;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{Frame, PointCloud, Pose, PoseError};
