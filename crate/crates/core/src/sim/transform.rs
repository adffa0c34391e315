//! Homogeneous world-from-ego transforms.

use super::geometry::Pose;
use super::route::Route;

pub type Mat4 = [[f64; 4]; 4];

/// World-from-ego rigid transform of a planar pose (`z = 0`).
///
/// ```text
/// | cos φ  -sin φ  0  X |
/// | sin φ   cos φ  0  Y |
/// |   0       0    1  0 |
/// |   0       0    0  1 |
/// ```
pub fn ego_transform(pose: &Pose) -> Mat4 {
    let (c, s) = (pose.yaw.cos(), pose.yaw.sin());
    [
        [c, -s, 0.0, pose.x],
        [s, c, 0.0, pose.y],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Inverse of a rigid transform: `[Rᵀ, -Rᵀt]`.
pub fn rigid_inverse(m: &Mat4) -> Mat4 {
    let mut inv = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = m[j][i];
        }
    }
    for i in 0..3 {
        inv[i][3] = -(0..3).map(|k| inv[i][k] * m[k][3]).sum::<f64>();
    }
    inv[3][3] = 1.0;
    inv
}

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn apply(m: &Mat4, x: f64, y: f64) -> (f64, f64) {
    (
        m[0][0] * x + m[0][1] * y + m[0][3],
        m[1][0] * x + m[1][1] * y + m[1][3],
    )
}

/// Global point expressed in the ego frame (x forward, y left).
pub fn to_ego(pose: &Pose, x: f64, y: f64) -> (f64, f64) {
    apply(&rigid_inverse(&ego_transform(pose)), x, y)
}

/// Every route waypoint in the ego frame, in route order.
pub fn transform_waypoints(pose: &Pose, route: &Route) -> Vec<(f64, f64)> {
    let inv = rigid_inverse(&ego_transform(pose));
    route
        .waypoints
        .iter()
        .map(|w| apply(&inv, w.x, w.y))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_pose_is_identity() {
        let m = ego_transform(&Pose::new(0.0, 0.0, 0.0));
        for (i, row) in m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn ego_origin() {
        assert_eq!(to_ego(&Pose::new(3.0, 4.0, 0.0), 3.0, 4.0), (0.0, 0.0));
    }

    #[test]
    fn quarter_turn_point() {
        let pose = Pose::new(1.0, 2.0, FRAC_PI_2);
        let (ex, ey) = to_ego(&pose, 1.0, 3.0);
        assert!((ex - 1.0).abs() < 1e-12 && ey.abs() < 1e-12);
        let (gx, gy) = apply(&ego_transform(&pose), ex, ey);
        assert!((gx - 1.0).abs() < 1e-9 && (gy - 3.0).abs() < 1e-9);
    }
}
