//! Initial dough shapes and per-task target particle sets.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tools::ToolKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Rolling,
    Cutting,
    Gathering,
    Shaping,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Rolling, Task::Cutting, Task::Gathering, Task::Shaping];

    pub fn tool(self) -> ToolKind {
        match self {
            Task::Rolling => ToolKind::RollingPin,
            Task::Cutting => ToolKind::Knife,
            Task::Gathering => ToolKind::DualFlats,
            Task::Shaping => ToolKind::RollingBall,
        }
    }

    /// The task a tool serves; tools and tasks are one-to-one.
    pub fn for_tool(kind: ToolKind) -> Self {
        match kind {
            ToolKind::RollingPin => Task::Rolling,
            ToolKind::Knife => Task::Cutting,
            ToolKind::DualFlats => Task::Gathering,
            ToolKind::RollingBall => Task::Shaping,
        }
    }

    /// Initial shapes the task's tool is paired with.
    pub fn shapes(self) -> [Shape; 2] {
        match self {
            Task::Gathering => [Shape::TwoBalls, Shape::Random],
            _ => [Shape::Ball, Shape::Cuboid],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Rolling => "rolling",
            Task::Cutting => "cutting",
            Task::Gathering => "gathering",
            Task::Shaping => "shaping",
        }
    }

    pub fn index(self) -> u32 {
        Self::ALL.iter().position(|&t| t == self).expect("listed") as u32
    }

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Ball,
    TwoBalls,
    Cuboid,
    Random,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Ball, Shape::TwoBalls, Shape::Cuboid, Shape::Random];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Ball => "ball",
            Shape::TwoBalls => "two_balls",
            Shape::Cuboid => "cuboid",
            Shape::Random => "random",
        }
    }

    pub fn index(self) -> u32 {
        Self::ALL.iter().position(|&s| s == self).expect("listed") as u32
    }

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn check_pairing(task: Task, shape: Shape) -> Result<()> {
    if task.shapes().contains(&shape) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} is not paired with {shape} dough (allowed: {}, {})",
            task.tool(),
            task.shapes()[0],
            task.shapes()[1]
        )))
    }
}

/// A solid region described by its signed membership test.
#[derive(Clone, Debug)]
pub(crate) enum Solid {
    Sphere { c: [f64; 3], r: f64 },
    Cuboid { c: [f64; 3], h: [f64; 3] },
    Cylinder { c: [f64; 2], r: f64, height: f64 },
    Union(Vec<Solid>),
}

impl Solid {
    pub(crate) fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Solid::Sphere { c, r } => dist2(p, *c) <= r * r,
            Solid::Cuboid { c, h } => (0..3).all(|i| (p[i] - c[i]).abs() <= h[i]),
            Solid::Cylinder { c, r, height } => {
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                dx * dx + dy * dy <= r * r && p[2] >= 0.0 && p[2] <= *height
            }
            Solid::Union(parts) => parts.iter().any(|s| s.contains(p)),
        }
    }

    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Solid::Sphere { c, r } => ([c[0] - r, c[1] - r, c[2] - r], [c[0] + r, c[1] + r, c[2] + r]),
            Solid::Cuboid { c, h } => ([c[0] - h[0], c[1] - h[1], c[2] - h[2]], [c[0] + h[0], c[1] + h[1], c[2] + h[2]]),
            Solid::Cylinder { c, r, height } => ([c[0] - r, c[1] - r, 0.0], [c[0] + r, c[1] + r, *height]),
            Solid::Union(parts) => {
                parts.iter().map(Solid::bounds).fold(([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]), |(lo, hi), (l, h)| {
                    ([lo[0].min(l[0]), lo[1].min(l[1]), lo[2].min(l[2])], [hi[0].max(h[0]), hi[1].max(h[1]), hi[2].max(h[2])])
                })
            }
        }
    }

    /// Lattice points inside the solid. The lattice is anchored at the
    /// workspace origin offset by half a spacing so fills are reproducible.
    pub(crate) fn lattice(&self, spacing: f64) -> Vec<[f64; 3]> {
        let (lo, hi) = self.bounds();
        let first = |v: f64| ((v / spacing) - 0.5).ceil() as i64;
        let last = |v: f64| ((v / spacing) - 0.5).floor() as i64;
        let mut out = Vec::new();
        for k in first(lo[2])..=last(hi[2]) {
            for j in first(lo[1])..=last(hi[1]) {
                for i in first(lo[0])..=last(hi[0]) {
                    let p = [(i as f64 + 0.5) * spacing, (j as f64 + 0.5) * spacing, (k as f64 + 0.5) * spacing];
                    if self.contains(p) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

/// Ball radius and base footprint used for the standard shapes.
const BALL_RADIUS: f64 = 0.1;

pub(crate) fn initial_solid(shape: Shape, rng: &mut ChaCha8Rng) -> Solid {
    let r = BALL_RADIUS;
    match shape {
        Shape::Ball => Solid::Sphere { c: [0.5, 0.5, r], r },
        Shape::Cuboid => Solid::Cuboid { c: [0.5, 0.5, 0.07], h: [0.09, 0.09, 0.07] },
        Shape::TwoBalls => {
            Solid::Union(vec![Solid::Sphere { c: [0.33, 0.5, 0.08], r: 0.08 }, Solid::Sphere { c: [0.67, 0.5, 0.08], r: 0.08 }])
        }
        Shape::Random => {
            let count = rng.random_range(3..=4);
            let mut blobs: Vec<([f64; 3], f64)> = Vec::new();
            let mut tries = 0;
            while blobs.len() < count && tries < 1000 {
                tries += 1;
                let rad = rng.random_range(0.05..0.065);
                let c = [rng.random_range(0.25..0.75), rng.random_range(0.25..0.75), rad];
                // Gaps keep the blobs distinct so gathering is needed.
                if blobs.iter().all(|(o, orad)| dist2(*o, c).sqrt() > rad + orad + 0.03) {
                    blobs.push((c, rad));
                }
            }
            Solid::Union(blobs.into_iter().map(|(c, r)| Solid::Sphere { c, r }).collect())
        }
    }
}

/// Target particle set for `task`, given the unjittered initial fill.
pub(crate) fn target_points(task: Task, initial: &[[f64; 3]], spacing: f64) -> Vec<[f64; 3]> {
    let volume = initial.len() as f64 * spacing.powi(3);
    match task {
        Task::Rolling | Task::Shaping => {
            let r = if task == Task::Rolling { 0.16 } else { 0.13 };
            let height = volume / (std::f64::consts::PI * r * r);
            Solid::Cylinder { c: [0.5, 0.5], r, height }.lattice(spacing)
        }
        Task::Gathering => {
            let r = (3.0 * volume / (4.0 * std::f64::consts::PI)).cbrt();
            Solid::Sphere { c: [0.5, 0.5, r], r }.lattice(spacing)
        }
        Task::Cutting => {
            let cx = initial.iter().map(|p| p[0]).sum::<f64>() / initial.len() as f64;
            initial
                .iter()
                .map(|p| {
                    let shift = if p[0] < cx { -0.05 } else { 0.05 };
                    [p[0] + shift, p[1], p[2]]
                })
                .collect()
        }
    }
}
