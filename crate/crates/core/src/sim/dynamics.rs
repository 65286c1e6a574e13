//! Position-based plastic stepping.
//!
//! Each substep: gravity on unsupported particles, prediction, projection
//! out of the tool, pairwise overlap relaxation, ground and box clamps.
//! Velocities are taken before relaxation so separating overlaps never
//! injects momentum; there is no rest shape to spring back to.

use super::neighbors::{dist2, NeighborGrid};
use super::tools::{ToolPose, ToolSpec};
use super::{ParticleSystem, SimConfig};
use crate::error::{Error, Result};

/// Advances `state` through each waypoint in turn, starting from the tool at
/// `from`. Returns whether any particle touched the tool.
pub fn step(state: &mut ParticleSystem, tool: &ToolSpec, from: &ToolPose, waypoints: &[ToolPose], cfg: &SimConfig) -> Result<bool> {
    let mut contact = false;
    let mut prev = *from;
    let dt = cfg.waypoint_dt / cfg.substeps as f64;
    for (w, next) in waypoints.iter().enumerate() {
        for s in 0..cfg.substeps {
            let a = prev.lerp(next, s as f64 / cfg.substeps as f64);
            let b = prev.lerp(next, (s + 1) as f64 / cfg.substeps as f64);
            contact |= substep(state, tool, &a, &b, dt, cfg);
            if let Some(i) = state.positions.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(Error::Simulation { step: w * cfg.substeps + s, reason: format!("particle {i} is not finite") });
            }
        }
        prev = *next;
    }
    Ok(contact)
}

fn substep(state: &mut ParticleSystem, tool: &ToolSpec, pose_a: &ToolPose, pose_b: &ToolPose, dt: f64, cfg: &SimConfig) -> bool {
    let r = state.rest_spacing;
    let radius = 0.5 * r;
    let n = state.positions.len();
    let grid = NeighborGrid::build(&state.positions, 1.5 * r);

    // A particle rests on the ground or on a neighbor below it.
    let supported: Vec<bool> = (0..n)
        .map(|i| {
            let p = state.positions[i];
            if p[2] <= radius + 0.05 * r {
                return true;
            }
            let mut found = false;
            grid.for_each_near(p, |j| {
                let q = state.positions[j];
                if j != i && q[2] < p[2] - 0.3 * r && dist2(p, q) < (1.3 * r) * (1.3 * r) {
                    found = true;
                }
            });
            found
        })
        .collect();

    for i in 0..n {
        let v = &mut state.velocities[i];
        if supported[i] {
            *v = [0.0; 3];
        } else {
            v[2] -= cfg.gravity * dt;
        }
        for a in 0..3 {
            state.positions[i][a] += v[a] * dt;
        }
    }

    let predicted = state.positions.clone();
    let tool_vel = {
        let (pa, pb) = (pose_a.padded(), pose_b.padded());
        [0, 1, 2].map(|a| (pb[a] - pa[a]) / dt)
    };
    let mut contact = false;
    for i in 0..n {
        let p = state.positions[i];
        let (phi, nrm) = tool.sdf(pose_b, p);
        if phi < radius {
            contact = true;
            let push = radius - phi;
            state.positions[i] = [p[0] + push * nrm[0], p[1] + push * nrm[1], p[2] + push * nrm[2]];
            let v = &mut state.velocities[i];
            let vn = v[0] * nrm[0] + v[1] * nrm[1] + v[2] * nrm[2];
            let tn = tool_vel[0] * nrm[0] + tool_vel[1] * nrm[1] + tool_vel[2] * nrm[2];
            let target = vn.max(tn);
            for a in 0..3 {
                v[a] += (target - vn) * nrm[a];
            }
        }
    }

    let grid = NeighborGrid::build(&state.positions, 1.5 * r);
    let pairs = grid.pairs_within(&state.positions, 1.5 * r);

    // Shear coupling: tool displacement drags the adjacent layer along.
    if cfg.cohesion > 0.0 && contact {
        let shift: Vec<[f64; 3]> = (0..n).map(|i| [0, 1, 2].map(|a| state.positions[i][a] - predicted[i][a])).collect();
        let touched: Vec<bool> = shift.iter().map(|d| d.iter().any(|v| *v != 0.0)).collect();
        let mut acc = vec![[0.0; 3]; n];
        let mut wsum = vec![0.0; n];
        for &(i, j) in &pairs {
            let w = 1.0 - dist2(state.positions[i], state.positions[j]).sqrt() / (1.5 * r);
            for a in 0..3 {
                acc[i][a] += w * shift[j][a];
                acc[j][a] += w * shift[i][a];
            }
            wsum[i] += w;
            wsum[j] += w;
        }
        for i in (0..n).filter(|&i| !touched[i] && wsum[i] > 0.0) {
            for a in 0..3 {
                state.positions[i][a] += cfg.cohesion * acc[i][a] / wsum[i];
            }
        }
    }

    let mut delta = vec![[0.0; 3]; n];
    let mut count = vec![0u32; n];
    for _ in 0..cfg.relax_iters {
        delta.iter_mut().for_each(|d| *d = [0.0; 3]);
        count.iter_mut().for_each(|c| *c = 0);
        for &(i, j) in &pairs {
            let (p, q) = (state.positions[i], state.positions[j]);
            let d2 = dist2(p, q);
            if d2 >= r * r {
                continue;
            }
            let d = d2.sqrt();
            let dir = if d > 1e-12 {
                [(q[0] - p[0]) / d, (q[1] - p[1]) / d, (q[2] - p[2]) / d]
            } else {
                // Coincident particles separate along x, by index order.
                [1.0, 0.0, 0.0]
            };
            let half = 0.5 * (r - d);
            for a in 0..3 {
                delta[i][a] -= half * dir[a];
                delta[j][a] += half * dir[a];
            }
            count[i] += 1;
            count[j] += 1;
        }
        for i in 0..n {
            if count[i] > 0 {
                let c = count[i] as f64;
                for a in 0..3 {
                    state.positions[i][a] += delta[i][a] / c;
                }
            }
        }
    }

    let hi = 1.0 - radius;
    for i in 0..n {
        let p = state.positions[i];
        let (phi, nrm) = tool.sdf(pose_b, p);
        let mut p = if phi < radius {
            contact = true;
            let push = radius - phi;
            [p[0] + push * nrm[0], p[1] + push * nrm[1], p[2] + push * nrm[2]]
        } else {
            p
        };
        for v in &mut p {
            *v = v.clamp(radius, hi);
        }
        state.positions[i] = p;
        let v = &mut state.velocities[i];
        for a in 0..3 {
            v[a] *= cfg.damping;
        }
        if p[2] <= radius && v[2] < 0.0 {
            v[2] = 0.0;
        }
    }
    contact
}
