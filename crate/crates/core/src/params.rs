//! Named parameters, gradient slots and the SGD optimizer.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Slot {
    value: Tensor2,
    #[serde(skip)]
    grad: Option<Tensor2>,
    #[serde(skip)]
    velocity: Option<Tensor2>,
}

/// Parameters keyed by name. Iteration order is the lexical name order, so
/// every sweep over the store is deterministic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor2) {
        self.slots.insert(
            name.into(),
            Slot {
                value,
                grad: None,
                velocity: None,
            },
        );
    }

    /// Inserts a parameter drawn from N(0, std²).
    pub fn insert_normal(&mut self, name: &str, rows: usize, cols: usize, std: f64, rng: &mut Rng) {
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        self.insert(name, Tensor2::from_vec(rows, cols, data).expect("sized"));
    }

    /// Inserts a parameter drawn uniformly from [-bound, bound].
    pub fn insert_uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64, rng: &mut Rng) {
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Tensor2::from_vec(rows, cols, data).expect("sized"));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor2> {
        self.slots
            .get(name)
            .map(|s| &s.value)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor2> {
        self.slots
            .get_mut(name)
            .map(|s| &mut s.value)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor2> {
        self.slots.get(name).and_then(|s| s.grad.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.slots.values().map(|s| s.value.data().len()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Adds `grad` into the named gradient slot.
    pub fn accumulate(&mut self, name: &str, grad: &Tensor2) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if slot.value.shape() != grad.shape() {
            return Err(Error::Shape {
                op: "accumulate gradient",
                left: slot.value.shape(),
                right: grad.shape(),
            });
        }
        match &mut slot.grad {
            Some(g) => g.add_assign(grad),
            None => slot.grad = Some(grad.clone()),
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for slot in self.slots.values_mut() {
            slot.grad = None;
        }
    }

    pub fn scale_grads(&mut self, s: f64) {
        for g in self.slots.values_mut().filter_map(|s| s.grad.as_mut()) {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.slots
            .values()
            .filter_map(|s| s.grad.as_ref())
            .flat_map(|g| g.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slots.values().all(|s| s.value.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.0,
            clip_norm: None,
        }
    }
}

/// `p ← p − lr·v`, `v ← μ·v + g`; gradients are cleared afterwards.
///
/// The step is refused, with no parameter touched, if any gradient is
/// non-finite.
pub fn sgd_step(store: &mut ParamStore, cfg: &SgdConfig) -> Result<()> {
    for (name, slot) in &store.slots {
        if let Some(g) = &slot.grad {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
    }
    let scale = match cfg.clip_norm {
        Some(max) => {
            let norm = store.grad_norm();
            if norm > max {
                max / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    for slot in store.slots.values_mut() {
        let Some(g) = slot.grad.take() else { continue };
        let update = if cfg.momentum != 0.0 {
            let v = slot.velocity.get_or_insert_with(|| Tensor2::zeros(g.rows(), g.cols()));
            for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
                *vi = cfg.momentum * *vi + gi * scale;
            }
            v.clone()
        } else {
            g.scale(scale)
        };
        for (p, u) in slot.value.data_mut().iter_mut().zip(update.data()) {
            *p -= cfg.lr * u;
        }
    }
    store.step += 1;
    Ok(())
}
