//! Grid rasterization, signed distance fields and the shape-matching reward.

use serde::{Deserialize, Serialize};

use super::ParticleSystem;
use crate::error::{Error, Result};

/// Grid cells per workspace axis.
pub const GRID_RESOLUTION: usize = 32;

/// Density (fill fraction) above which a cell counts as occupied.
pub const OCCUPANCY_THRESHOLD: f64 = 0.35;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub iou: f64,
    pub sdf: f64,
    pub density: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { iou: 1.0, sdf: 1.0, density: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub iou: f64,
    pub density_score: f64,
    pub sdf_score: f64,
    pub reward: f64,
}

/// Goal shape on the `G³` workspace grid, indexed `(z·G + y)·G + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetState {
    pub resolution: usize,
    pub occupancy: Vec<bool>,
    pub density: Vec<f64>,
    /// Signed distance to the target surface in meters, negative inside.
    pub sdf: Vec<f64>,
    /// Particles the target was rasterized from.
    pub points: Vec<[f64; 3]>,
}

impl TargetState {
    pub fn from_points(points: Vec<[f64; 3]>, particle_volume: f64, resolution: usize) -> Result<Self> {
        let density = rasterize(&points, particle_volume, resolution);
        let occupancy = occupancy(&density);
        if !occupancy.iter().any(|&o| o) {
            return Err(Error::Config("target occupies no grid cell".into()));
        }
        let sdf = signed_distance(&occupancy, resolution);
        Ok(Self { resolution, occupancy, density, sdf, points })
    }

    /// Trilinear interpolation of the SDF at `p`, clamped to the grid.
    pub fn sdf_at(&self, p: [f64; 3]) -> f64 {
        trilinear(&self.sdf, self.resolution, p)
    }
}

/// Trilinear splat of particles onto cell centers, scaled so a cell filled
/// with dough at rest density reads about 1.
pub fn rasterize(points: &[[f64; 3]], particle_volume: f64, g: usize) -> Vec<f64> {
    let mut grid = vec![0.0; g * g * g];
    let scale = particle_volume * (g * g * g) as f64;
    for p in points {
        for_each_corner(g, *p, |idx, w| grid[idx] += w * scale);
    }
    grid
}

pub fn occupancy(density: &[f64]) -> Vec<bool> {
    density.iter().map(|&d| d > OCCUPANCY_THRESHOLD).collect()
}

/// Intersection over union of two occupancy grids; two empty grids match.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn compute_metrics(state: &ParticleSystem, target: &TargetState, weights: &RewardWeights) -> Result<MetricReport> {
    if !target.occupancy.iter().any(|&o| o) {
        return Err(Error::Config("target occupies no grid cell".into()));
    }
    let g = target.resolution;
    let density = rasterize(&state.positions, state.particle_volume, g);
    let occ = occupancy(&density);
    let iou = iou(&occ, &target.occupancy);
    let l2 = density.iter().zip(&target.density).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let density_score = -l2 / (g as f64).powf(1.5);
    let sdf_score = if state.positions.is_empty() {
        0.0
    } else {
        -state.positions.iter().map(|&p| target.sdf_at(p).max(0.0)).sum::<f64>() / state.positions.len() as f64
    };
    let reward = weights.iou * iou + weights.sdf * sdf_score + weights.density * density_score;
    Ok(MetricReport { iou, density_score, sdf_score, reward })
}

fn for_each_corner(g: usize, p: [f64; 3], mut f: impl FnMut(usize, f64)) {
    let u = p.map(|v| v * g as f64 - 0.5);
    let base = u.map(|v| v.floor());
    let frac = [u[0] - base[0], u[1] - base[1], u[2] - base[2]];
    for corner in 0..8 {
        let mut idx = [0usize; 3];
        let mut w = 1.0;
        let mut inside = true;
        for a in 0..3 {
            let bit = (corner >> a) & 1;
            let c = base[a] as i64 + bit as i64;
            if c < 0 || c >= g as i64 {
                inside = false;
                break;
            }
            idx[a] = c as usize;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if inside && w > 0.0 {
            f((idx[2] * g + idx[1]) * g + idx[0], w);
        }
    }
}

fn trilinear(grid: &[f64], g: usize, p: [f64; 3]) -> f64 {
    let hi = (g - 1) as f64;
    let u = p.map(|v| (v * g as f64 - 0.5).clamp(0.0, hi));
    let base = u.map(|v| (v.floor() as usize).min(g.saturating_sub(2)));
    let frac = [u[0] - base[0] as f64, u[1] - base[1] as f64, u[2] - base[2] as f64];
    let mut acc = 0.0;
    for corner in 0..8 {
        let mut idx = [0usize; 3];
        let mut w = 1.0;
        for a in 0..3 {
            let bit = (corner >> a) & 1;
            idx[a] = (base[a] + bit).min(g - 1);
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        acc += w * grid[(idx[2] * g + idx[1]) * g + idx[0]];
    }
    acc
}

/// Signed distance between cell centers and the occupancy boundary, in
/// meters. Boundary cells sit half a cell from the surface on either side.
pub fn signed_distance(occ: &[bool], g: usize) -> Vec<f64> {
    let h = 1.0 / g as f64;
    let to_occupied = squared_edt(occ, g, true);
    let to_empty = squared_edt(occ, g, false);
    occ.iter()
        .enumerate()
        .map(|(i, &inside)| if inside { -(to_empty[i].sqrt() - 0.5) * h } else { (to_occupied[i].sqrt() - 0.5) * h })
        .collect()
}

/// Squared Euclidean distance (in cells) to the nearest cell whose
/// occupancy equals `feature`, via three separable lower-envelope passes.
fn squared_edt(occ: &[bool], g: usize, feature: bool) -> Vec<f64> {
    // Stands in for infinity while staying finite through the parabola maths.
    let far = (3 * g * g) as f64 * 4.0 + 1.0;
    let mut d: Vec<f64> = occ.iter().map(|&o| if o == feature { 0.0 } else { far }).collect();
    let mut line = vec![0.0; g];
    let mut out = vec![0.0; g];
    for axis in 0..3 {
        let stride = [1, g, g * g][axis];
        for a in 0..g {
            for b in 0..g {
                let start = match axis {
                    0 => (a * g + b) * g,
                    1 => a * g * g + b,
                    _ => a * g + b,
                };
                for (k, v) in line.iter_mut().enumerate() {
                    *v = d[start + k * stride];
                }
                edt_1d(&line, &mut out);
                for (k, v) in out.iter().enumerate() {
                    d[start + k * stride] = *v;
                }
            }
        }
    }
    d
}

fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            // z[0] is -inf, so this never underflows.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}
