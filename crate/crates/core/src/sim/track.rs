//! Declarative track description and the segment graph built from it.
//!
//! Tracks are TOML files:
//!
//! ```toml
//! name = "demo"
//! lane_width = 5.0
//!
//! [[nodes]]            # at least one anchored node
//! id = "start"
//! x = 0.0
//! y = 0.0
//! heading = 0.0        # radians
//!
//! [[segments]]
//! id = "s1"
//! from = "start"
//! to = "a"             # created at the segment's end pose if new
//! kind = "straight"
//! length = 30.0
//!
//! [[segments]]
//! id = "t1"
//! from = "a"
//! kind = "t-junction"  # two quarter-turn branches
//! radius = 12.0
//! left = "l"
//! right = "r"
//!
//! [[obstacles]]
//! min = [40.0, -3.0]
//! max = [45.0, 3.0]
//! ```
//!
//! Arc segments (`arc-left`, `arc-right`) take `radius` and `sweep` (radians,
//! positive). A segment's `from` node must already exist. When `to` names an
//! existing node the segment's end pose must match it within 1e-9 in
//! position and heading.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::{normalize_angle, Curve, Pose, Rect};
use super::SimError;

const G1_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    Straight,
    ArcLeft,
    ArcRight,
    TJunction,
}

/// What a driven piece of road is, from the driver's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentTag {
    Straight,
    ArcLeft,
    ArcRight,
    TJunctionLeft,
    TJunctionRight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub id: String,
    pub from: String,
    pub kind: SegmentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub name: String,
    pub lane_width: f64,
    pub nodes: Vec<NodeSpec>,
    pub segments: Vec<SegmentSpec>,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
}

impl TrackSpec {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::InvalidTrack(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidTrack(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("track spec serializes")
    }

    /// One of the shipped tracks: `track-a`, `track-b` or `straight`.
    pub fn builtin(name: &str) -> Result<Self, SimError> {
        let text = match name {
            "track-a" => include_str!("../../data/tracks/track-a.toml"),
            "track-b" => include_str!("../../data/tracks/track-b.toml"),
            "straight" => include_str!("../../data/tracks/straight.toml"),
            other => return Err(SimError::UnknownTrack(other.to_string())),
        };
        Self::parse(text)
    }

    pub fn build(&self) -> Result<Track, SimError> {
        Track::from_spec(self.clone())
    }
}

/// Directed centerline piece between two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub curve: Curve,
    pub tag: SegmentTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub pose: Pose,
}

/// Validated track: nodes with poses and the directed edges between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub spec: TrackSpec,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    index: HashMap<String, usize>,
}

impl Track {
    pub fn from_spec(spec: TrackSpec) -> Result<Self, SimError> {
        let invalid = |m: String| Err(SimError::InvalidTrack(m));
        if !(spec.lane_width > 0.0) {
            return invalid(format!("lane_width must be > 0, got {}", spec.lane_width));
        }
        if spec.nodes.is_empty() {
            return invalid("at least one anchored node is required".into());
        }
        let mut track = Track {
            nodes: Vec::new(),
            edges: Vec::new(),
            index: HashMap::new(),
            spec: spec.clone(),
        };
        for n in &spec.nodes {
            if track.index.contains_key(&n.id) {
                return invalid(format!("duplicate node `{}`", n.id));
            }
            track.add_node(&n.id, Pose::new(n.x, n.y, n.heading));
        }
        for seg in &spec.segments {
            track.add_segment(seg)?;
        }
        for r in &spec.obstacles {
            if !(r.min[0] < r.max[0] && r.min[1] < r.max[1]) {
                return invalid(format!("degenerate obstacle {r:?}"));
            }
        }
        Ok(track)
    }

    fn add_node(&mut self, id: &str, pose: Pose) -> usize {
        self.nodes.push(Node {
            id: id.to_string(),
            pose,
        });
        self.index.insert(id.to_string(), self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    fn connect(&mut self, seg_id: &str, target: &str, end: Pose) -> Result<usize, SimError> {
        match self.index.get(target) {
            Some(&idx) => {
                let p = self.nodes[idx].pose;
                let gap = p.distance_to(end.x, end.y);
                let turn = normalize_angle(p.yaw - end.yaw).abs();
                if gap > G1_TOL || turn > G1_TOL {
                    return Err(SimError::InvalidTrack(format!(
                        "segment `{seg_id}` ends {gap:.3e} m / {turn:.3e} rad away from node `{target}`"
                    )));
                }
                Ok(idx)
            }
            None => Ok(self.add_node(target, end)),
        }
    }

    fn add_segment(&mut self, seg: &SegmentSpec) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::InvalidTrack(format!("segment `{}`: {m}", seg.id)));
        let Some(&from) = self.index.get(&seg.from) else {
            return invalid(format!("unknown from-node `{}`", seg.from));
        };
        let start = self.nodes[from].pose;
        let half = self.spec.lane_width / 2.0;
        let radius_ok = |r: Option<f64>| match r {
            Some(r) if r > half => Ok(r),
            Some(r) => Err(SimError::InvalidTrack(format!(
                "segment `{}`: radius {r} must exceed half the lane width",
                seg.id
            ))),
            None => Err(SimError::InvalidTrack(format!("segment `{}`: radius missing", seg.id))),
        };
        match seg.kind {
            SegmentKind::Straight | SegmentKind::ArcLeft | SegmentKind::ArcRight => {
                if seg.left.is_some() || seg.right.is_some() {
                    return invalid("only t-junctions carry branch tags".into());
                }
                let Some(to) = &seg.to else {
                    return invalid("missing `to`".into());
                };
                let (curve, tag) = match seg.kind {
                    SegmentKind::Straight => match seg.length {
                        Some(l) if l > 0.0 => (Curve::Line { start, length: l }, SegmentTag::Straight),
                        _ => return invalid("straight needs a positive length".into()),
                    },
                    kind => {
                        let radius = radius_ok(seg.radius)?;
                        let sweep = match seg.sweep {
                            Some(s) if s > 0.0 && s < 2.0 * std::f64::consts::PI => s,
                            _ => return invalid("sweep must be in (0, 2π)".into()),
                        };
                        if kind == SegmentKind::ArcLeft {
                            (Curve::Arc { start, radius, sweep }, SegmentTag::ArcLeft)
                        } else {
                            (Curve::Arc { start, radius, sweep: -sweep }, SegmentTag::ArcRight)
                        }
                    }
                };
                let to = self.connect(&seg.id, to, curve.end())?;
                self.edges.push(Edge {
                    id: seg.id.clone(),
                    from,
                    to,
                    curve,
                    tag,
                });
            }
            SegmentKind::TJunction => {
                let (Some(left), Some(right)) = (&seg.left, &seg.right) else {
                    return invalid("t-junction needs both `left` and `right` branches".into());
                };
                if seg.to.is_some() {
                    return invalid("t-junction uses `left`/`right` instead of `to`".into());
                }
                let radius = radius_ok(seg.radius)?;
                for (branch, sweep, tag, suffix) in [
                    (left, FRAC_PI_2, SegmentTag::TJunctionLeft, "left"),
                    (right, -FRAC_PI_2, SegmentTag::TJunctionRight, "right"),
                ] {
                    let curve = Curve::Arc { start, radius, sweep };
                    let id = format!("{}.{suffix}", seg.id);
                    let to = self.connect(&id, branch, curve.end())?;
                    self.edges.push(Edge {
                        id,
                        from,
                        to,
                        curve,
                        tag,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn lane_width(&self) -> f64 {
        self.spec.lane_width
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.spec.obstacles
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.from == node)
    }

    /// Distance from `(x, y)` to the nearest centerline anywhere on the track.
    pub fn distance_to_road(&self, x: f64, y: f64) -> f64 {
        self.edges
            .iter()
            .map(|e| e.curve.project(x, y).distance)
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STRAIGHTS: &str = r#"
        name = "t"
        lane_width = 4.0
        [[nodes]]
        id = "a"
        x = 0.0
        y = 0.0
        heading = 0.0
        [[segments]]
        id = "s1"
        from = "a"
        to = "b"
        kind = "straight"
        length = 10.0
        [[segments]]
        id = "s2"
        from = "b"
        to = "c"
        kind = "straight"
        length = 5.0
    "#;

    #[test]
    fn builds_chained_nodes() {
        let t = TrackSpec::parse(TWO_STRAIGHTS).unwrap().build().unwrap();
        assert_eq!(t.nodes.len(), 3);
        let c = t.nodes[t.node("c").unwrap()].pose;
        assert!((c.x - 15.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_discontinuous_join() {
        let text = format!(
            "{TWO_STRAIGHTS}\n[[segments]]\nid = \"s3\"\nfrom = \"a\"\nto = \"c\"\nkind = \"straight\"\nlength = 14.0\n"
        );
        let err = TrackSpec::parse(&text).unwrap().build().unwrap_err();
        assert!(matches!(err, SimError::InvalidTrack(m) if m.contains("s3")));
    }

    #[test]
    fn rejects_tight_radius_and_bad_width() {
        let mut spec = TrackSpec::parse(TWO_STRAIGHTS).unwrap();
        spec.segments.push(SegmentSpec {
            id: "arc".into(),
            from: "c".into(),
            kind: SegmentKind::ArcLeft,
            to: Some("d".into()),
            length: None,
            radius: Some(1.9),
            sweep: Some(1.0),
            left: None,
            right: None,
        });
        assert!(spec.build().is_err());
        let mut spec = TrackSpec::parse(TWO_STRAIGHTS).unwrap();
        spec.lane_width = 0.0;
        assert!(spec.build().is_err());
    }

    #[test]
    fn t_junction_needs_two_branches() {
        let mut spec = TrackSpec::parse(TWO_STRAIGHTS).unwrap();
        spec.segments.push(SegmentSpec {
            id: "tj".into(),
            from: "c".into(),
            kind: SegmentKind::TJunction,
            to: None,
            length: None,
            radius: Some(8.0),
            sweep: None,
            left: Some("l".into()),
            right: None,
        });
        assert!(spec.build().is_err());
        spec.segments.last_mut().unwrap().right = Some("r".into());
        let t = spec.build().unwrap();
        assert_eq!(t.outgoing(t.node("c").unwrap()).count(), 2);
    }

    #[test]
    fn builtin_tracks_are_valid_and_g1_continuous() {
        for name in ["track-a", "track-b", "straight"] {
            let t = TrackSpec::builtin(name).unwrap().build().unwrap();
            // every edge leaving a node starts exactly at that node's pose
            for e in &t.edges {
                let n = t.nodes[e.from].pose;
                let s = e.curve.start();
                assert!(n.distance_to(s.x, s.y) < 1e-9);
                assert!(normalize_angle(n.yaw - s.yaw).abs() < 1e-9);
            }
        }
        assert!(TrackSpec::builtin("nope").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let spec = TrackSpec::builtin("track-a").unwrap();
        assert_eq!(TrackSpec::parse(&spec.to_toml()).unwrap(), spec);
    }
}
