//! Rigid tool primitives, their poses and signed distance functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    RollingPin,
    Knife,
    DualFlats,
    RollingBall,
}

impl ToolKind {
    pub const ALL: [ToolKind; 4] = [ToolKind::RollingPin, ToolKind::Knife, ToolKind::DualFlats, ToolKind::RollingBall];

    pub fn action_dim(self) -> usize {
        match self {
            ToolKind::DualFlats => 7,
            _ => 3,
        }
    }

    /// Number of manipulator nodes in the scene graph.
    pub fn manip_nodes(self) -> usize {
        match self {
            ToolKind::DualFlats => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ToolKind::RollingPin => "rolling_pin",
            ToolKind::Knife => "knife",
            ToolKind::DualFlats => "dual_flats",
            ToolKind::RollingBall => "rolling_ball",
        }
    }

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn index(self) -> u32 {
        Self::ALL.iter().position(|&k| k == self).expect("listed") as u32
    }
}

impl std::fmt::Display for ToolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Pose of a tool. Single-body tools use the first three slots as the
/// center; dual flats use `[A(3), B(3), yaw]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToolPose {
    pub kind: ToolKind,
    values: [f64; 7],
}

impl ToolPose {
    pub fn new(kind: ToolKind, values: &[f64]) -> Result<Self> {
        if values.len() != kind.action_dim() {
            return Err(Error::dim(format!("{kind} pose needs {} values, got {}", kind.action_dim(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::dim("pose values must be finite"));
        }
        let mut v = [0.0; 7];
        v[..values.len()].copy_from_slice(values);
        Ok(Self { kind, values: v })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.kind.action_dim()]
    }

    /// The pose zero-padded to seven slots.
    pub fn padded(&self) -> [f64; 7] {
        self.values
    }

    pub fn lerp(&self, other: &ToolPose, t: f64) -> ToolPose {
        let mut v = [0.0; 7];
        for i in 0..7 {
            v[i] = self.values[i] + (other.values[i] - self.values[i]) * t;
        }
        ToolPose { kind: self.kind, values: v }
    }

    pub fn distance(&self, other: &ToolPose) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Rounds every slot through `f32`, the precision used on disk.
    pub fn quantized(&self) -> ToolPose {
        let mut v = self.values;
        v.iter_mut().for_each(|x| *x = *x as f32 as f64);
        ToolPose { kind: self.kind, values: v }
    }
}

/// Tool geometry and the box of poses the policy may command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub kind: ToolKind,
    /// Capsule/sphere radius (pin, ball).
    pub radius: f64,
    /// Capsule half length along y (pin).
    pub half_length: f64,
    /// Box half extents (knife, each flat).
    pub half_extents: [f64; 3],
    /// Per-dimension pose bounds `(low, high)`.
    pub bounds: Vec<(f64, f64)>,
    /// Pose at reset.
    pub home: Vec<f64>,
}

impl ToolSpec {
    pub fn standard(kind: ToolKind) -> Self {
        use std::f64::consts::FRAC_PI_2;
        match kind {
            ToolKind::RollingPin => Self {
                kind,
                radius: 0.03,
                half_length: 0.2,
                half_extents: [0.0; 3],
                bounds: vec![(0.3, 0.7), (0.35, 0.65), (0.035, 0.3)],
                home: vec![0.5, 0.5, 0.3],
            },
            ToolKind::Knife => Self {
                kind,
                radius: 0.0,
                half_length: 0.0,
                half_extents: [0.004, 0.2, 0.12],
                bounds: vec![(0.3, 0.7), (0.45, 0.55), (0.125, 0.4)],
                home: vec![0.5, 0.5, 0.4],
            },
            ToolKind::RollingBall => Self {
                kind,
                radius: 0.05,
                half_length: 0.0,
                half_extents: [0.0; 3],
                bounds: vec![(0.3, 0.7), (0.3, 0.7), (0.055, 0.3)],
                home: vec![0.5, 0.5, 0.3],
            },
            ToolKind::DualFlats => Self {
                kind,
                radius: 0.0,
                half_length: 0.0,
                half_extents: [0.005, 0.08, 0.06],
                bounds: vec![(0.15, 0.85), (0.15, 0.85), (0.065, 0.25), (0.15, 0.85), (0.15, 0.85), (0.065, 0.25), (-FRAC_PI_2, FRAC_PI_2)],
                home: vec![0.2, 0.5, 0.25, 0.8, 0.5, 0.25, 0.0],
            },
        }
    }

    pub fn action_dim(&self) -> usize {
        self.kind.action_dim()
    }

    pub fn home_pose(&self) -> ToolPose {
        ToolPose::new(self.kind, &self.home).expect("home pose matches the tool")
    }

    pub fn contains(&self, pose: &ToolPose) -> bool {
        pose.kind == self.kind && pose.as_slice().iter().zip(&self.bounds).all(|(v, (lo, hi))| *v >= lo - 1e-9 && *v <= hi + 1e-9)
    }

    /// Clamps a pose into the bounds.
    pub fn clamp(&self, pose: &ToolPose) -> ToolPose {
        let v: Vec<f64> = pose.as_slice().iter().zip(&self.bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
        ToolPose::new(self.kind, &v).expect("same dimension")
    }

    /// Maps a normalized action in `[-1, 1]^dim` to a pose.
    pub fn pose_from_unit(&self, unit: &[f64]) -> ToolPose {
        let v: Vec<f64> = unit.iter().zip(&self.bounds).map(|(u, (lo, hi))| lo + (u.clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo)).collect();
        ToolPose::new(self.kind, &v).expect("same dimension")
    }

    /// Inverse of [`Self::pose_from_unit`].
    pub fn unit_from_pose(&self, pose: &ToolPose) -> Vec<f64> {
        pose.as_slice().iter().zip(&self.bounds).map(|(v, (lo, hi))| (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)).collect()
    }

    /// Signed distance from `p` to the tool surface at `pose`, with the
    /// outward unit normal of the closest body.
    pub fn sdf(&self, pose: &ToolPose, p: [f64; 3]) -> (f64, [f64; 3]) {
        let v = pose.padded();
        match self.kind {
            ToolKind::RollingPin => {
                let cy = p[1].clamp(v[1] - self.half_length, v[1] + self.half_length);
                let d = [p[0] - v[0], p[1] - cy, p[2] - v[2]];
                let len = norm(d);
                (len - self.radius, normalize_or_up(d, len))
            }
            ToolKind::RollingBall => {
                let d = [p[0] - v[0], p[1] - v[1], p[2] - v[2]];
                let len = norm(d);
                (len - self.radius, normalize_or_up(d, len))
            }
            ToolKind::Knife => box_sdf(p, [v[0], v[1], v[2]], 0.0, self.half_extents),
            ToolKind::DualFlats => {
                let a = box_sdf(p, [v[0], v[1], v[2]], v[6], self.half_extents);
                let b = box_sdf(p, [v[3], v[4], v[5]], v[6], self.half_extents);
                if a.0 <= b.0 {
                    a
                } else {
                    b
                }
            }
        }
    }
}

fn norm(d: [f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn normalize_or_up(d: [f64; 3], len: f64) -> [f64; 3] {
    if len > 1e-12 {
        [d[0] / len, d[1] / len, d[2] / len]
    } else {
        [0.0, 0.0, 1.0]
    }
}

/// Box rotated by `yaw` about the vertical axis.
fn box_sdf(p: [f64; 3], c: [f64; 3], yaw: f64, h: [f64; 3]) -> (f64, [f64; 3]) {
    let (s, co) = yaw.sin_cos();
    let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
    // World to local: rotate by -yaw.
    let l = [co * d[0] + s * d[1], -s * d[0] + co * d[1], d[2]];
    let q = [l[0].abs() - h[0], l[1].abs() - h[1], l[2].abs() - h[2]];
    let outside = [q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)];
    let out_len = norm(outside);
    let (dist, nl) = if out_len > 0.0 {
        let n = [outside[0] * l[0].signum() / out_len, outside[1] * l[1].signum() / out_len, outside[2] * l[2].signum() / out_len];
        (out_len, n)
    } else {
        let axis = if q[0] >= q[1] && q[0] >= q[2] {
            0
        } else if q[1] >= q[2] {
            1
        } else {
            2
        };
        let mut n = [0.0; 3];
        n[axis] = if l[axis] >= 0.0 { 1.0 } else { -1.0 };
        (q[axis], n)
    };
    // Local to world: rotate by +yaw.
    let nw = [co * nl[0] - s * nl[1], s * nl[0] + co * nl[1], nl[2]];
    (dist, nw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_dims_follow_tool_kind() {
        assert_eq!(ToolKind::RollingPin.action_dim(), 3);
        assert_eq!(ToolKind::Knife.action_dim(), 3);
        assert_eq!(ToolKind::RollingBall.action_dim(), 3);
        assert_eq!(ToolKind::DualFlats.action_dim(), 7);
        for k in ToolKind::ALL {
            let spec = ToolSpec::standard(k);
            assert_eq!(spec.bounds.len(), k.action_dim());
            assert!(spec.contains(&spec.home_pose()));
        }
    }

    #[test]
    fn sphere_and_capsule_distances() {
        let ball = ToolSpec::standard(ToolKind::RollingBall);
        let pose = ToolPose::new(ToolKind::RollingBall, &[0.5, 0.5, 0.5]).unwrap();
        let (d, n) = ball.sdf(&pose, [0.5, 0.5, 0.6]);
        assert!((d - 0.05).abs() < 1e-12);
        assert_eq!(n, [0.0, 0.0, 1.0]);

        let pin = ToolSpec::standard(ToolKind::RollingPin);
        let pose = ToolPose::new(ToolKind::RollingPin, &[0.5, 0.5, 0.2]).unwrap();
        // Beyond the end cap along the axis.
        let (d, _) = pin.sdf(&pose, [0.5, 0.8, 0.2]);
        assert!((d - (0.1 - 0.03)).abs() < 1e-12);
        let (d, n) = pin.sdf(&pose, [0.5, 0.6, 0.18]);
        assert!((d + 0.01).abs() < 1e-12);
        assert!((n[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_box_distance() {
        let flats = ToolSpec::standard(ToolKind::DualFlats);
        let yaw = std::f64::consts::FRAC_PI_2;
        let pose = ToolPose::new(ToolKind::DualFlats, &[0.3, 0.5, 0.1, 0.9, 0.5, 0.1, yaw]).unwrap();
        // With a quarter turn the thin axis points along y.
        let (d, n) = flats.sdf(&pose, [0.3, 0.52, 0.1]);
        assert!((d - (0.02 - 0.005)).abs() < 1e-12);
        assert!((n[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_mapping_roundtrips() {
        let spec = ToolSpec::standard(ToolKind::DualFlats);
        let unit = [-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0];
        let pose = spec.pose_from_unit(&unit);
        assert!(spec.contains(&pose));
        let back = spec.unit_from_pose(&pose);
        for (a, b) in unit.iter().zip(back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
