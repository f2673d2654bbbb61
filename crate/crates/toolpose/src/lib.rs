//! Multi-view 3D pose reconstruction and evaluation for rigid laparoscopic
//! tools.
//!
//! The library turns per-camera 2D keypoint detections of surgical graspers
//! and beans into 3D tool poses, and measures how well it did:
//!
//! - [`camera`] — pinhole cameras, projection matrices, back-projected rays,
//!   and the rig configuration file.
//! - [`reconstruct`] — homogeneous least-squares triangulation of point
//!   keypoints, arm-axis estimation from stacked plane normals, cross-view
//!   tip correspondence, multi-instance bean matching, temporal smoothing.
//! - [`metrics`] — back-projection error suites plus IoU/OKS-based
//!   precision, recall, mAP@50 and mAP@50:95.
//! - [`sim`] — a synthetic camera-array simulator producing detection
//!   streams with exact 3D ground truth; the oracle for round-trip tests.
//! - [`dataset`] — keypoint label files, PPM/PGM rasters, mask-driven
//!   background/marker substitution, and random dataset pruning.
//! - [`stream`] — the line-delimited detection / ground-truth / pose file
//!   formats.
//! - [`pipeline`] — the frame pipeline with per-stage timing and the
//!   view-count ablation runner.

pub mod camera;
pub mod dataset;
pub mod metrics;
pub mod pipeline;
pub mod reconstruct;
pub mod sim;
pub mod stream;

pub use camera::{Camera, Extrinsics, Intrinsics, Ray, Rig};
pub use reconstruct::{Observation2D, ToolClass, ToolDetection2D, ToolPose3D};
