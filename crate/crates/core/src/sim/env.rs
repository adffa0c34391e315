use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::geometry::{normalize_angle, Pose};
use super::route::Route;
use super::track::{SegmentTag, Track};
use super::SimError;

/// Penalty for leaving the lane or hitting an obstacle.
pub const CRASH_REWARD: f64 = -200.0;
/// Bonus for arriving at the goal.
pub const GOAL_REWARD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    None,
    LaneDeparture,
    Collision,
    GoalReached,
}

impl Event {
    pub fn is_terminal(self) -> bool {
        self != Event::None
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Event::None => "none",
            Event::LaneDeparture => "lane_departure",
            Event::Collision => "collision",
            Event::GoalReached => "goal_reached",
        })
    }
}

/// Per-step reward.
///
/// Crashes cost 200, arriving earns 100; otherwise the car is paid for
/// speed along the lane and charged for speed across it and for distance
/// from the lane center: `|v cos φ| − |v sin φ| − |v||d|`.
pub fn reward(v: f64, d: f64, phi: f64, event: Event) -> f64 {
    match event {
        Event::LaneDeparture | Event::Collision => CRASH_REWARD,
        Event::GoalReached => GOAL_REWARD,
        Event::None => (v * phi.cos()).abs() - (v * phi.sin()).abs() - v.abs() * d.abs(),
    }
}

/// Control command; both axes are clamped to `[-1, 1]` before use.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub steer: f64,
    pub throttle: f64,
}

impl Action {
    pub fn new(steer: f64, throttle: f64) -> Self {
        Self { steer, throttle }
    }

    pub fn clamped(self) -> Self {
        Self {
            steer: self.steer.clamp(-1.0, 1.0),
            throttle: self.throttle.clamp(-1.0, 1.0),
        }
    }
}

/// Vehicle state plus its lane-relative driving vector `(v, d, phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub pose: Pose,
    pub v: f64,
    /// Signed lateral offset from the lane center, left positive.
    pub d: f64,
    /// Heading error against the lane tangent.
    pub phi: f64,
    /// Index of the next route waypoint.
    pub route_progress: usize,
    /// Arc length travelled along the route centerline.
    pub s: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: EgoState,
    pub reward: f64,
    pub done: bool,
    pub event: Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    /// Front-wheel angle at full steer, radians.
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_speed: f64,
    pub length: f64,
    pub width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            max_steer: 35f64.to_radians(),
            max_accel: 3.0,
            max_speed: 10.0,
            length: 4.5,
            width: 1.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub vehicle: VehicleParams,
    pub dt: f64,
    pub goal_radius: f64,
    pub max_steps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            dt: 0.05,
            goal_radius: 2.0,
            max_steps: 2000,
        }
    }
}

/// The five explained driving actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionCategory {
    GoStraight,
    TurnLeft,
    TurnRight,
    TurnLeftT,
    TurnRightT,
}

impl ActionCategory {
    pub const ALL: [ActionCategory; 5] = [
        ActionCategory::GoStraight,
        ActionCategory::TurnLeft,
        ActionCategory::TurnRight,
        ActionCategory::TurnLeftT,
        ActionCategory::TurnRightT,
    ];

    pub fn from_tag(tag: SegmentTag) -> Self {
        match tag {
            SegmentTag::Straight => ActionCategory::GoStraight,
            SegmentTag::ArcLeft => ActionCategory::TurnLeft,
            SegmentTag::ArcRight => ActionCategory::TurnRight,
            SegmentTag::TJunctionLeft => ActionCategory::TurnLeftT,
            SegmentTag::TJunctionRight => ActionCategory::TurnRightT,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionCategory::GoStraight => "go_straight",
            ActionCategory::TurnLeft => "turn_left",
            ActionCategory::TurnRight => "turn_right",
            ActionCategory::TurnLeftT => "turn_left_t",
            ActionCategory::TurnRightT => "turn_right_t",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ActionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ActionCategory {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| SimError::UnknownCategory(s.to_string()))
    }
}

/// Category of the action being performed at `state`: the tag of the route
/// segment the car is currently on.
pub fn action_category(route: &Route, progress: usize, state: &EgoState) -> ActionCategory {
    debug_assert!(progress <= route.len());
    ActionCategory::from_tag(route.tag_at(state.s.clamp(0.0, route.length)))
}

/// A track plus a planned route: everything needed to step the car.
#[derive(Debug, Clone)]
pub struct Env {
    pub track: Arc<Track>,
    pub route: Arc<Route>,
    pub config: EnvConfig,
}

impl Env {
    pub fn new(track: Arc<Track>, route: Arc<Route>, config: EnvConfig) -> Self {
        Self {
            track,
            route,
            config,
        }
    }

    /// Load a built-in track and plan its `start` → `goal` route.
    pub fn builtin(name: &str, waypoints: usize, config: EnvConfig) -> Result<Self, SimError> {
        let track = super::TrackSpec::builtin(name)?.build()?;
        let route = super::plan_route(&track, "start", "goal", waypoints)?;
        Ok(Self::new(Arc::new(track), Arc::new(route), config))
    }

    /// At rest on the route start, aligned with the lane.
    pub fn reset(&self) -> EgoState {
        let p = self.route.pose_at(0.0);
        self.state_at(p, 0.0, 0.0, 0.0)
    }

    /// Build a state at `pose` and fill in its lane-relative quantities.
    pub fn state_at(&self, pose: Pose, v: f64, s_hint: f64, time: f64) -> EgoState {
        let pos = self.route.locate(pose.x, pose.y, s_hint, 5.0, 20.0);
        EgoState {
            pose,
            v,
            d: pos.proj.lateral,
            phi: normalize_angle(pose.yaw - pos.proj.heading),
            route_progress: self.route.next_waypoint(pos.s),
            s: pos.s,
            time,
        }
    }

    pub fn step(&self, state: &EgoState, action: Action, dt: f64) -> Result<StepOutcome, SimError> {
        if !(dt > 0.0 && dt <= 0.1) {
            return Err(SimError::InvalidDt(dt));
        }
        let veh = &self.config.vehicle;
        let a = action.clamped();
        let accel = a.throttle * veh.max_accel;
        let delta = a.steer * veh.max_steer;
        let v = (state.v + accel * dt).clamp(0.0, veh.max_speed);
        let yaw = state.pose.yaw;
        let (c, s) = (yaw.cos(), yaw.sin());
        let pose = Pose::new(
            state.pose.x + v * c * dt,
            state.pose.y + v * s * dt,
            yaw + v * delta.tan() / veh.wheelbase * dt,
        );
        let next = self.state_at(pose, v, state.s, state.time + dt);

        let event = if self
            .track
            .obstacles()
            .iter()
            .any(|r| r.intersects_oriented(&pose, veh.length, veh.width))
        {
            Event::Collision
        } else if next.d.abs() > self.track.lane_width() / 2.0 {
            Event::LaneDeparture
        } else if pose.distance_to(self.route.goal.0, self.route.goal.1) <= self.config.goal_radius
        {
            Event::GoalReached
        } else {
            Event::None
        };
        Ok(StepOutcome {
            next_state: next,
            reward: reward(next.v, next.d, next.phi, event),
            done: event.is_terminal(),
            event,
        })
    }

    /// Pure-pursuit driver along the route: aims at the centerline point
    /// `lookahead` meters ahead and holds `target_speed`. Not learned; used
    /// as a reference policy.
    pub fn follow_route(&self, state: &EgoState, lookahead: f64, target_speed: f64) -> Action {
        let veh = &self.config.vehicle;
        let target = self.route.pose_at((state.s + lookahead).min(self.route.length));
        let (dx, dy) = (target.x - state.pose.x, target.y - state.pose.y);
        let alpha = normalize_angle(dy.atan2(dx) - state.pose.yaw);
        let ld = dx.hypot(dy).max(1e-6);
        let delta = (2.0 * veh.wheelbase * alpha.sin() / ld).atan();
        Action::new(delta / veh.max_steer, (target_speed - state.v) / veh.max_accel).clamped()
    }

    pub fn category(&self, state: &EgoState) -> ActionCategory {
        action_category(&self.route, state.route_progress, state)
    }
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    LaneDeparture,
    Collision,
    GoalReached,
    MaxSteps,
}

impl EpisodeEnd {
    pub fn from_event(event: Event) -> Option<Self> {
        match event {
            Event::None => None,
            Event::LaneDeparture => Some(EpisodeEnd::LaneDeparture),
            Event::Collision => Some(EpisodeEnd::Collision),
            Event::GoalReached => Some(EpisodeEnd::GoalReached),
        }
    }
}

/// One line of an exported trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub d: f64,
    pub phi: f64,
    pub action: Action,
    pub reward: f64,
    pub event: Event,
}

impl TrajectoryRecord {
    pub fn new(outcome: &StepOutcome, action: Action) -> Self {
        let s = &outcome.next_state;
        Self {
            t: s.time,
            x: s.pose.x,
            y: s.pose.y,
            yaw: s.pose.yaw,
            v: s.v,
            d: s.d,
            phi: s.phi,
            action,
            reward: outcome.reward,
            event: outcome.event,
        }
    }
}

/// Write records as line-delimited JSON.
pub fn write_trajectory<W: Write>(out: &mut W, records: &[TrajectoryRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn straight_env() -> Env {
        Env::builtin("straight", 15, EnvConfig::default()).unwrap()
    }

    #[test]
    fn reward_cases() {
        assert_eq!(reward(3.0, 0.1, 0.2, Event::Collision), -200.0);
        assert_eq!(reward(3.0, 0.1, 0.2, Event::LaneDeparture), -200.0);
        assert_eq!(reward(3.0, 0.1, 0.2, Event::GoalReached), 100.0);
        assert_eq!(reward(1.0, 0.0, 0.0, Event::None), 1.0);
        let r = reward(2.0, 0.5, FRAC_PI_4, Event::None);
        assert!((r + 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn rest_stays_at_rest() {
        let env = straight_env();
        let s0 = env.reset();
        let out = env.step(&s0, Action::default(), 0.05).unwrap();
        assert_eq!(out.next_state.pose, s0.pose);
        assert_eq!(out.next_state.v, 0.0);
        assert_eq!(out.reward, 0.0);
        assert!(!out.done);
        assert!((out.next_state.time - 0.05).abs() < 1e-15);
    }

    #[test]
    fn straight_throttle_keeps_center() {
        let env = straight_env();
        let mut s = env.reset();
        for _ in 0..100 {
            let out = env.step(&s, Action::new(0.0, 0.5), 0.05).unwrap();
            s = out.next_state;
            assert!(s.d.abs() < 1e-9);
        }
        assert!(s.v > 0.0);
    }

    #[test]
    fn forced_departure() {
        let env = straight_env();
        let mut s = env.reset();
        s.pose.y = env.track.lane_width() / 2.0 + 1e-6;
        s.v = 1.0;
        let out = env.step(&s, Action::default(), 0.05).unwrap();
        assert_eq!(out.event, Event::LaneDeparture);
        assert_eq!(out.reward, -200.0);
        assert!(out.done);
    }

    #[test]
    fn bad_dt() {
        let env = straight_env();
        let s = env.reset();
        assert!(matches!(env.step(&s, Action::default(), 0.0), Err(SimError::InvalidDt(_))));
        assert!(matches!(env.step(&s, Action::default(), 0.2), Err(SimError::InvalidDt(_))));
    }

    #[test]
    fn actions_are_clamped() {
        let env = straight_env();
        let s = env.reset();
        let a = env.step(&s, Action::new(0.0, 5.0), 0.05).unwrap();
        let b = env.step(&s, Action::new(0.0, 1.0), 0.05).unwrap();
        assert_eq!(a.next_state, b.next_state);
    }

    #[test]
    fn obstacle_collision() {
        let mut spec = super::super::TrackSpec::builtin("straight").unwrap();
        spec.obstacles.push(super::super::Rect { min: [3.0, -1.0], max: [4.0, 1.0] });
        let track = spec.build().unwrap();
        let route = super::super::plan_route(&track, "start", "goal", 15).unwrap();
        let env = Env::new(Arc::new(track), Arc::new(route), EnvConfig::default());
        let mut s = env.reset();
        s.v = 10.0;
        let mut event = Event::None;
        for _ in 0..20 {
            let out = env.step(&s, Action::new(0.0, 0.0), 0.05).unwrap();
            s = out.next_state;
            if out.done {
                event = out.event;
                break;
            }
        }
        assert_eq!(event, Event::Collision);
    }

    #[test]
    fn category_names_round_trip() {
        for c in ActionCategory::ALL {
            assert_eq!(c.as_str().parse::<ActionCategory>().unwrap(), c);
        }
    }
}
