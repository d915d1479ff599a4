//! Dynamic-object masking, trajectory accuracy metrics and local/global
//! navigation for an indoor guidance robot.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod dynamic;
pub mod fixtures;
pub mod flow;
pub mod geometry;
pub mod metrics;
pub mod planning;
pub mod simulation;

pub use dataset::{BoundingBox, FrameDetections, GrayImage, Mask, StampedPose, Trajectory};
pub use flow::{FlowConfig, FlowTrack};
pub use geometry::{AlignmentResult, Pose};
