//! Synthetic 2-D track world: declarative tracks, A* routing, ego-frame
//! transforms, kinematic bicycle dynamics and the driving reward.

mod env;
mod geometry;
mod route;
mod track;
mod transform;

use thiserror::Error;

pub use env::{
    action_category, reward, write_trajectory, Action, ActionCategory, EgoState, Env, EnvConfig,
    EpisodeEnd, Event, StepOutcome, TrajectoryRecord, VehicleParams, CRASH_REWARD, GOAL_REWARD,
};
pub use geometry::{normalize_angle, Curve, Pose, Projection, Rect};
pub use route::{plan_route, route_along, Route, RouteLeg, RoutePosition, Waypoint};
pub use track::{Edge, Node, NodeSpec, SegmentKind, SegmentSpec, SegmentTag, Track, TrackSpec};
pub use transform::{
    apply, ego_transform, mat_mul, rigid_inverse, to_ego, transform_waypoints, Mat4,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid track: {0}")]
    InvalidTrack(String),
    #[error("unknown built-in track `{0}`")]
    UnknownTrack(String),
    #[error("invalid node: {0}")]
    InvalidNode(String),
    #[error("no path from `{start}` to `{goal}`")]
    NoPath { start: String, goal: String },
    #[error("a route needs at least 2 waypoints, got {0}")]
    InvalidWaypointCount(usize),
    #[error("dt must be in (0, 0.1], got {0}")]
    InvalidDt(f64),
    #[error("unknown action category `{0}`")]
    UnknownCategory(String),
}
