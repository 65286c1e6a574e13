use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Tensor;
use crate::error::{Error, Result};

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_store_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Owns the parameters of one model component, in registration order.
///
/// Every store carries a process-unique id so a [`super::Tape`] can route
/// gradients back to the right store even when several models share a tape.
#[derive(Debug)]
pub struct ParamStore {
    uid: u64,
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self { uid: fresh_store_id(), params: self.params.clone(), index: self.index.clone() }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self { uid: fresh_store_id(), params: Vec::new(), index: HashMap::new() }
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    /// Registers a parameter. Panics on a duplicate name, which is a
    /// programming error in model construction.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name `{name}`");
        let grad = Tensor::zeros(value.shape());
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Parameter { name, value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn add_normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut impl Rng) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect();
        self.add(name, Tensor::from_raw(shape.to_vec(), data))
    }

    pub fn add_uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut impl Rng) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add(name, Tensor::from_raw(shape.to_vec(), data))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_weights(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Sets every weight to zero (used by tests of degenerate cases).
    pub fn zero_values(&mut self) {
        for p in &mut self.params {
            p.value.fill(0.0);
        }
    }

    /// Copies values from a store with the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        self.check_layout(other)?;
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.value.data_mut().copy_from_slice(src.value.data());
        }
        Ok(())
    }

    /// Polyak averaging: `self ← tau·online + (1−tau)·self`.
    pub fn polyak_from(&mut self, online: &ParamStore, tau: f64) -> Result<()> {
        self.check_layout(online)?;
        for (dst, src) in self.params.iter_mut().zip(&online.params) {
            for (t, o) in dst.value.data_mut().iter_mut().zip(src.value.data()) {
                *t = tau * o + (1.0 - tau) * *t;
            }
        }
        Ok(())
    }

    /// Replaces a parameter's value by name, checking its shape.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let idx = *self.index.get(name).ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        let p = &mut self.params[idx];
        if p.value.shape() != value.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}` has shape {:?}, checkpoint has {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    fn check_layout(&self, other: &ParamStore) -> Result<()> {
        let same = self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
        if same {
            Ok(())
        } else {
            Err(Error::dim("parameter stores have different layouts"))
        }
    }
}
