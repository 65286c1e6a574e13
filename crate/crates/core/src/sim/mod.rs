//! Plastic dough simulator in the unit-cube workspace (z up, ground at z=0),
//! its tools, the four manipulation tasks and the shape-matching metrics.

mod dump;
mod dynamics;
mod metrics;
pub(crate) mod neighbors;
mod shapes;
mod tools;

pub use dump::{read_trajectory_dump, write_trajectory_dump, DumpManifest};
pub use dynamics::step;
pub use metrics::{
    compute_metrics, iou, occupancy, rasterize, signed_distance, MetricReport, RewardWeights, TargetState, GRID_RESOLUTION,
    OCCUPANCY_THRESHOLD,
};
pub use shapes::{check_pairing, Shape, Task};
pub use tools::{ToolKind, ToolPose, ToolSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use neighbors::{dist2, NeighborGrid};

/// Skeleton size the surface extraction must be able to feed.
pub const MIN_SURFACE_POINTS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub gravity: f64,
    pub substeps: usize,
    pub damping: f64,
    /// Duration of one tool waypoint in seconds.
    pub waypoint_dt: f64,
    pub relax_iters: usize,
    /// Fraction of a neighbor's tool-driven displacement a particle follows.
    pub cohesion: f64,
    /// Spacing of the initial particle lattice.
    pub lattice_spacing: f64,
    pub grid_resolution: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            substeps: 10,
            damping: 0.98,
            waypoint_dt: 0.02,
            relax_iters: 2,
            cohesion: 0.5,
            lattice_spacing: 0.02,
            grid_resolution: GRID_RESOLUTION,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.substeps == 0 {
            return bad("substeps must be positive");
        }
        if !(self.waypoint_dt > 0.0) {
            return bad("waypoint_dt must be positive");
        }
        if !(0.0..=1.0).contains(&self.damping) {
            return bad("damping must lie in [0, 1]");
        }
        if !(self.lattice_spacing > 0.0 && self.lattice_spacing < 0.1) {
            return bad("lattice_spacing must lie in (0, 0.1)");
        }
        if !(0.0..=1.0).contains(&self.cohesion) {
            return bad("cohesion must lie in [0, 1]");
        }
        if !self.gravity.is_finite() || self.gravity < 0.0 {
            return bad("gravity must be finite and non-negative");
        }
        if self.grid_resolution < 4 {
            return bad("grid_resolution must be at least 4");
        }
        Ok(())
    }

    pub fn rest_spacing(&self) -> f64 {
        0.9 * self.lattice_spacing
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    /// Pairs closer than this are pushed apart.
    pub rest_spacing: f64,
    /// Dough volume each particle stands for, used by rasterization.
    pub particle_volume: f64,
}

impl ParticleSystem {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn max_height(&self) -> f64 {
        self.positions.iter().map(|p| p[2]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Builds the initial dough, tool pose and target for a task.
pub fn reset(task: Task, shape: Shape, seed: u64, cfg: &SimConfig) -> Result<(ParticleSystem, ToolPose, TargetState)> {
    check_pairing(task, shape)?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = cfg.lattice_spacing;
    let lattice = shapes::initial_solid(shape, &mut rng).lattice(s);
    let jitter = 0.02 * s;
    let positions: Vec<[f64; 3]> = lattice
        .iter()
        .map(|p| p.map(|v| v + rng.random_range(-jitter..=jitter)))
        .map(|p| p.map(|v| v.clamp(0.5 * cfg.rest_spacing(), 1.0 - 0.5 * cfg.rest_spacing())))
        .collect();
    let particle_volume = s.powi(3);
    let target = TargetState::from_points(shapes::target_points(task, &lattice, s), particle_volume, cfg.grid_resolution)?;
    let state =
        ParticleSystem { velocities: vec![[0.0; 3]; positions.len()], positions, rest_spacing: cfg.rest_spacing(), particle_volume };
    let pose = ToolSpec::standard(task.tool()).home_pose();
    Ok((state, pose, target))
}

/// Boundary particles: those whose neighbor count within `1.5·rest_spacing`
/// is at or below the 40th percentile of all counts.
pub fn surface_particles(state: &ParticleSystem) -> Result<Vec<[f64; 3]>> {
    surface_points(&state.positions, state.rest_spacing)
}

/// [`surface_particles`] for a bare point set, e.g. a target shape.
pub fn surface_points(points: &[[f64; 3]], rest_spacing: f64) -> Result<Vec<[f64; 3]>> {
    let n = points.len();
    if n < 8 {
        return Err(Error::DegenerateState(format!("{n} particles, need at least 8")));
    }
    let radius = 1.5 * rest_spacing;
    let grid = NeighborGrid::build(points, radius);
    let counts: Vec<usize> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut c = 0;
            grid.for_each_near(p, |j| {
                if j != i && dist2(p, points[j]) < radius * radius {
                    c += 1;
                }
            });
            c
        })
        .collect();
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let p40 = sorted[(0.4 * (n - 1) as f64).floor() as usize];
    let out: Vec<[f64; 3]> = points.iter().zip(&counts).filter(|(_, &c)| c <= p40).map(|(p, _)| *p).collect();
    if out.len() < MIN_SURFACE_POINTS.min(n) {
        return Err(Error::DegenerateState(format!("{} surface particles, need {MIN_SURFACE_POINTS}", out.len())));
    }
    Ok(out)
}

/// One task instance: dough, tool, target and reward weights.
#[derive(Clone, Debug)]
pub struct DoughEnv {
    pub task: Task,
    pub shape: Shape,
    pub config: SimConfig,
    pub weights: RewardWeights,
    pub tool: ToolSpec,
    pub state: ParticleSystem,
    pub pose: ToolPose,
    pub target: TargetState,
}

impl DoughEnv {
    pub fn new(task: Task, shape: Shape, seed: u64, config: SimConfig, weights: RewardWeights) -> Result<Self> {
        let (state, pose, target) = reset(task, shape, seed, &config)?;
        Ok(Self { task, shape, tool: ToolSpec::standard(task.tool()), config, weights, state, pose, target })
    }

    /// Moves the tool through `waypoints`, leaving it at the last one.
    pub fn step(&mut self, waypoints: &[ToolPose]) -> Result<bool> {
        if let Some(bad) = waypoints.iter().find(|w| !self.tool.contains(w)) {
            return Err(Error::Usage(format!("waypoint {:?} outside the tool bounds", bad.as_slice())));
        }
        let contact = step(&mut self.state, &self.tool, &self.pose, waypoints, &self.config)?;
        if let Some(last) = waypoints.last() {
            self.pose = *last;
        }
        Ok(contact)
    }

    pub fn metrics(&self) -> Result<MetricReport> {
        compute_metrics(&self.state, &self.target, &self.weights)
    }

    pub fn surface(&self) -> Result<Vec<[f64; 3]>> {
        surface_particles(&self.state)
    }
}

#[cfg(test)]
mod tests;
