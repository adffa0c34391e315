use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wrap an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Planar pose in the global frame; `z` is always 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn tangent(&self) -> (f64, f64) {
        (self.yaw.cos(), self.yaw.sin())
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Closest-point query result against a centerline piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point, clamped to the piece.
    pub s: f64,
    /// Signed offset, positive to the left of the direction of travel.
    pub lateral: f64,
    /// Euclidean distance to the closest point.
    pub distance: f64,
    /// Centerline heading at `s`.
    pub heading: f64,
}

/// A single centerline piece: a straight line or a circular arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Line { start: Pose, length: f64 },
    /// `sweep > 0` turns left, `< 0` turns right.
    Arc { start: Pose, radius: f64, sweep: f64 },
}

impl Curve {
    pub fn start(&self) -> Pose {
        match *self {
            Curve::Line { start, .. } | Curve::Arc { start, .. } => start,
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Curve::Line { length, .. } => length,
            Curve::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Signed curvature (left positive).
    pub fn curvature(&self) -> f64 {
        match *self {
            Curve::Line { .. } => 0.0,
            Curve::Arc { radius, sweep, .. } => sweep.signum() / radius,
        }
    }

    fn center(start: Pose, radius: f64, sweep: f64) -> (f64, f64) {
        let r = radius * sweep.signum();
        (start.x - r * start.yaw.sin(), start.y + r * start.yaw.cos())
    }

    pub fn pose_at(&self, s: f64) -> Pose {
        match *self {
            Curve::Line { start, .. } => {
                let (c, sn) = start.tangent();
                Pose::new(start.x + s * c, start.y + s * sn, start.yaw)
            }
            Curve::Arc { start, radius, sweep } => {
                let r = radius * sweep.signum();
                let (cx, cy) = Self::center(start, radius, sweep);
                let theta = start.yaw + s / r;
                Pose::new(cx + r * theta.sin(), cy - r * theta.cos(), theta)
            }
        }
    }

    pub fn end(&self) -> Pose {
        self.pose_at(self.length())
    }

    pub fn project(&self, x: f64, y: f64) -> Projection {
        match *self {
            Curve::Line { start, length } => {
                let (tx, ty) = start.tangent();
                let (vx, vy) = (x - start.x, y - start.y);
                let along = vx * tx + vy * ty;
                let s = along.clamp(0.0, length);
                let (px, py) = (start.x + s * tx, start.y + s * ty);
                let lateral = tx * (y - py) - ty * (x - px);
                Projection {
                    s,
                    lateral,
                    distance: (x - px).hypot(y - py),
                    heading: start.yaw,
                }
            }
            Curve::Arc { start, radius, sweep } => {
                let sign = sweep.signum();
                let (cx, cy) = Self::center(start, radius, sweep);
                let (vx, vy) = (x - cx, y - cy);
                let rho = vx.hypot(vy);
                let length = self.length();
                let kappa = sign / radius;
                let theta = (sign * vx).atan2(-sign * vy);
                let mid = start.yaw + kappa * length / 2.0;
                let raw = length / 2.0 + normalize_angle(theta - mid) / kappa;
                if (0.0..=length).contains(&raw) {
                    let lateral = sign * (radius - rho);
                    Projection {
                        s: raw,
                        lateral,
                        distance: lateral.abs(),
                        heading: normalize_angle(start.yaw + kappa * raw),
                    }
                } else {
                    let s = raw.clamp(0.0, length);
                    let p = self.pose_at(s);
                    let (tx, ty) = p.tangent();
                    Projection {
                        s,
                        lateral: tx * (y - p.y) - ty * (x - p.x),
                        distance: p.distance_to(x, y),
                        heading: p.yaw,
                    }
                }
            }
        }
    }
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    /// Separating-axis test against an oriented box centered at `pose`.
    pub fn intersects_oriented(&self, pose: &Pose, length: f64, width: f64) -> bool {
        let (c, s) = pose.tangent();
        let (hl, hw) = (length / 2.0, width / 2.0);
        let corners = [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)]
            .map(|(a, b)| (pose.x + a * c - b * s, pose.y + a * s + b * c));
        let rect = [
            (self.min[0], self.min[1]),
            (self.max[0], self.min[1]),
            (self.max[0], self.max[1]),
            (self.min[0], self.max[1]),
        ];
        let axes = [(1.0, 0.0), (0.0, 1.0), (c, s), (-s, c)];
        axes.iter().all(|&(ax, ay)| {
            let proj = |pts: &[(f64, f64)]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, y)| {
                    let p = x * ax + y * ay;
                    (lo.min(p), hi.max(p))
                })
            };
            let (a0, a1) = proj(&corners);
            let (b0, b1) = proj(&rect);
            a1 >= b0 && b1 >= a0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
        assert_eq!(normalize_angle(0.0), 0.0);
    }

    #[test]
    fn quarter_arcs_end_where_expected() {
        let left = Curve::Arc { start: Pose::new(0.0, 0.0, 0.0), radius: 10.0, sweep: FRAC_PI_2 };
        let e = left.end();
        assert!((e.x - 10.0).abs() < 1e-12 && (e.y - 10.0).abs() < 1e-12);
        assert!((e.yaw - FRAC_PI_2).abs() < 1e-12);
        let right = Curve::Arc { start: Pose::new(0.0, 0.0, 0.0), radius: 10.0, sweep: -FRAC_PI_2 };
        let e = right.end();
        assert!((e.x - 10.0).abs() < 1e-12 && (e.y + 10.0).abs() < 1e-12);
        assert!((e.yaw + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn arc_projection_lateral_sign() {
        let arc = Curve::Arc { start: Pose::new(0.0, 0.0, 0.0), radius: 10.0, sweep: FRAC_PI_2 };
        // inside the left turn is to the left of travel
        let mid = arc.pose_at(arc.length() / 2.0);
        let (tx, ty) = mid.tangent();
        let q = (mid.x - ty * 1.5, mid.y + tx * 1.5);
        let p = arc.project(q.0, q.1);
        assert!((p.lateral - 1.5).abs() < 1e-9);
        assert!((p.s - arc.length() / 2.0).abs() < 1e-9);
        assert!((p.heading - mid.yaw).abs() < 1e-12);
    }

    #[test]
    fn line_projection_clamps() {
        let line = Curve::Line { start: Pose::new(0.0, 0.0, 0.0), length: 10.0 };
        let p = line.project(12.0, 1.0);
        assert_eq!(p.s, 10.0);
        assert!((p.distance - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.lateral, 1.0);
    }

    #[test]
    fn oriented_box_overlap() {
        let r = Rect { min: [5.0, -1.0], max: [7.0, 1.0] };
        assert!(r.intersects_oriented(&Pose::new(3.5, 0.0, 0.0), 4.5, 1.8));
        assert!(!r.intersects_oriented(&Pose::new(2.0, 0.0, 0.0), 4.5, 1.8));
        // rotated 90°: the long side is now vertical
        assert!(!r.intersects_oriented(&Pose::new(3.5, 0.0, FRAC_PI_2), 4.5, 1.8));
    }
}
