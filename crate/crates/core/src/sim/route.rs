use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::geometry::{Curve, Projection};
use super::track::{SegmentTag, Track};
use super::SimError;

/// One route waypoint on the lane centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub tag: SegmentTag,
}

/// A traversed edge with its arc-length offset along the route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteLeg {
    pub edge: usize,
    pub curve: Curve,
    pub tag: SegmentTag,
    pub s_start: f64,
}

impl RouteLeg {
    pub fn s_end(&self) -> f64 {
        self.s_start + self.curve.length()
    }
}

/// Planned route: the minimum-length edge sequence between two nodes and
/// `n` waypoints spread uniformly along it by arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub waypoints: Vec<Waypoint>,
    pub goal: (f64, f64),
    pub legs: Vec<RouteLeg>,
    pub length: f64,
}

/// Where a point sits relative to the route centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutePosition {
    /// Arc length along the whole route.
    pub s: f64,
    pub leg: usize,
    pub proj: Projection,
}

impl Route {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn leg_at(&self, s: f64) -> usize {
        self.legs
            .iter()
            .position(|l| s < l.s_end())
            .unwrap_or(self.legs.len() - 1)
    }

    pub fn tag_at(&self, s: f64) -> SegmentTag {
        self.legs[self.leg_at(s)].tag
    }

    pub fn pose_at(&self, s: f64) -> super::Pose {
        let leg = &self.legs[self.leg_at(s)];
        leg.curve.pose_at((s - leg.s_start).clamp(0.0, leg.curve.length()))
    }

    /// Closest centerline point among legs overlapping `[s_hint - back, s_hint + ahead]`.
    pub fn locate(&self, x: f64, y: f64, s_hint: f64, back: f64, ahead: f64) -> RoutePosition {
        let (lo, hi) = (s_hint - back, s_hint + ahead);
        let mut best: Option<RoutePosition> = None;
        for (i, leg) in self.legs.iter().enumerate() {
            if leg.s_end() < lo || leg.s_start > hi {
                continue;
            }
            let proj = leg.curve.project(x, y);
            let better = best.is_none_or(|b| proj.distance < b.proj.distance);
            if better {
                best = Some(RoutePosition {
                    s: leg.s_start + proj.s,
                    leg: i,
                    proj,
                });
            }
        }
        best.unwrap_or_else(|| {
            let leg = self.leg_at(s_hint.clamp(0.0, self.length));
            let proj = self.legs[leg].curve.project(x, y);
            RoutePosition {
                s: self.legs[leg].s_start + proj.s,
                leg,
                proj,
            }
        })
    }

    /// Index of the first waypoint strictly ahead of arc length `s`
    /// (`len()` once every waypoint has been passed).
    pub fn next_waypoint(&self, s: f64) -> usize {
        let n = self.waypoints.len();
        if n < 2 {
            return n;
        }
        let spacing = self.length / (n - 1) as f64;
        let idx = (s / spacing).floor() as isize + 1;
        idx.clamp(0, n as isize) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, ties broken by lower node index
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* over the segment graph. Edge cost is centerline arc length; the
/// heuristic is straight-line distance to the goal node, which never
/// overestimates arc length.
pub fn plan_route(track: &Track, start: &str, goal: &str, n: usize) -> Result<Route, SimError> {
    let s = track
        .node(start)
        .ok_or_else(|| SimError::InvalidNode(start.to_string()))?;
    let g = track
        .node(goal)
        .ok_or_else(|| SimError::InvalidNode(goal.to_string()))?;
    if s == g {
        return Err(SimError::InvalidNode(format!(
            "start and goal are both `{start}`"
        )));
    }
    if n < 2 {
        return Err(SimError::InvalidWaypointCount(n));
    }
    let goal_pose = track.nodes[g].pose;
    let h = |node: usize| {
        let p = track.nodes[node].pose;
        p.distance_to(goal_pose.x, goal_pose.y)
    };

    let mut cost = vec![f64::INFINITY; track.nodes.len()];
    let mut via: Vec<Option<usize>> = vec![None; track.nodes.len()];
    let mut closed = vec![false; track.nodes.len()];
    let mut open = BinaryHeap::new();
    cost[s] = 0.0;
    open.push(Open { f: h(s), node: s });
    while let Some(Open { node, .. }) = open.pop() {
        if closed[node] {
            continue;
        }
        if node == g {
            break;
        }
        closed[node] = true;
        for (ei, edge) in track.outgoing(node) {
            let next = cost[node] + edge.curve.length();
            if next < cost[edge.to] {
                cost[edge.to] = next;
                via[edge.to] = Some(ei);
                open.push(Open {
                    f: next + h(edge.to),
                    node: edge.to,
                });
            }
        }
    }
    if !cost[g].is_finite() {
        return Err(SimError::NoPath {
            start: start.to_string(),
            goal: goal.to_string(),
        });
    }
    let mut edges = Vec::new();
    let mut at = g;
    while let Some(ei) = via[at] {
        edges.push(ei);
        at = track.edges[ei].from;
    }
    edges.reverse();
    Ok(route_along(track, &edges, n))
}

/// Build a route that follows `edges` in order.
pub fn route_along(track: &Track, edges: &[usize], n: usize) -> Route {
    let mut legs = Vec::with_capacity(edges.len());
    let mut s = 0.0;
    for &ei in edges {
        let e = &track.edges[ei];
        legs.push(RouteLeg {
            edge: ei,
            curve: e.curve,
            tag: e.tag,
            s_start: s,
        });
        s += e.curve.length();
    }
    let length = s;
    let mut route = Route {
        waypoints: Vec::with_capacity(n),
        goal: (0.0, 0.0),
        legs,
        length,
    };
    for i in 0..n {
        let s = if i + 1 == n {
            length
        } else {
            length * i as f64 / (n - 1) as f64
        };
        let p = route.pose_at(s);
        route.waypoints.push(Waypoint {
            x: p.x,
            y: p.y,
            tag: route.tag_at(s.min(length - 1e-12)),
        });
    }
    let last = route.waypoints[n - 1];
    route.goal = (last.x, last.y);
    route
}
