use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::LatentState;
use crate::sim::ToolPose;
use crate::skeleton::SkeletonGraph;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub eps: LatentState,
    pub goal: LatentState,
    /// Unit action in `(-1, 1)^d` that produced `pose_next`.
    pub action: Vec<f64>,
    pub reward: f64,
    pub eps_next: LatentState,
    pub done: bool,
    pub skeleton: SkeletonGraph,
    pub skeleton_next: SkeletonGraph,
    pub pose: ToolPose,
    pub pose_next: ToolPose,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self { capacity, items: VecDeque::with_capacity(capacity.min(4096)) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::InsufficientData("cannot sample an empty replay buffer".into()));
        }
        Ok((0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}

/// Column-stacked view of a minibatch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub eps: Tensor,
    pub goal: Tensor,
    pub action: Tensor,
    pub reward: Vec<f64>,
    pub eps_next: Tensor,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn new(items: &[&Transition]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InsufficientData("empty minibatch".into()));
        }
        let d = items[0].action.len();
        if items.iter().any(|t| t.action.len() != d) {
            return Err(Error::dim("mixed action widths in one minibatch"));
        }
        let stack = |f: &dyn Fn(&Transition) -> LatentState| LatentState::stack(&items.iter().map(|t| f(t)).collect::<Vec<_>>());
        Ok(Self {
            eps: stack(&|t| t.eps),
            goal: stack(&|t| t.goal),
            action: Tensor::new(&[items.len(), d], items.iter().flat_map(|t| t.action.iter().copied()).collect())?,
            reward: items.iter().map(|t| t.reward).collect(),
            eps_next: stack(&|t| t.eps_next),
            done: items.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}
