//! A* global planning on occupancy grids and VFH+ local steering.

mod astar;
mod grid;
mod vfh;

use thiserror::Error;

pub use astar::{astar, neighbors, octile, GridPath, PlanNode};
pub use grid::{Cell, OccupancyGrid};
pub use vfh::{
    angle_diff, binarize_histogram, build_polar_histogram, candidate_cost, mask_histogram, select_steering,
    turn_limits, valley_candidates, valleys, window_obstacles, wrap_angle, HistogramStage, PolarHistogram, Pose2,
    SteeringDecision, TurnLimits, VfhConfig, VfhState,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanningError {
    #[error("no path to goal")]
    NoPath,
    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),
    #[error("invalid thresholds: tau_low {low} > tau_high {high}")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
}
