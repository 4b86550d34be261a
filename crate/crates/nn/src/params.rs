//! Named trainable parameters and the RMSProp optimizer.

use std::collections::HashMap;

use aerial_core::RngStream;

use crate::error::NnError;
use crate::tensor::Tensor;

/// Handle to a parameter inside a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropConfig {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            decay: 0.99,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    mean_square: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, NnError> {
        if self.index.contains_key(name) {
            return Err(NnError::DuplicateParameter(name.to_string()));
        }
        let id = self.values.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.mean_square.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        Ok(ParamId(id))
    }

    /// Adds a `shape` parameter drawn uniformly from `±1/√fan_in`.
    pub fn add_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut RngStream,
    ) -> Result<ParamId, NnError> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| (2.0 * rng.uniform() - 1.0) * bound).collect();
        self.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NnError> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    /// Replaces a parameter's value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<(), NnError> {
        let cur = &self.values[id.0];
        if cur.shape() != value.shape() {
            return Err(NnError::ShapeMismatch {
                op: "set parameter",
                left: cur.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn mean_square(&self, id: ParamId) -> &Tensor {
        &self.mean_square[id.0]
    }

    /// Copies every value from `other` (same names and shapes), leaving the
    /// optimizer state untouched. Used for target networks.
    pub fn copy_values_from(&mut self, other: &ParameterStore) -> Result<(), NnError> {
        for (i, name) in self.names.iter().enumerate() {
            let j = other.id(name)?;
            let v = other.get(j);
            if v.shape() != self.values[i].shape() {
                return Err(NnError::ShapeMismatch {
                    op: "copy parameters",
                    left: self.values[i].shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            self.values[i] = v.clone();
        }
        Ok(())
    }

    /// Global L2 norm of a gradient set.
    pub fn grad_norm(grads: &[Option<Tensor>]) -> f64 {
        grads
            .iter()
            .flatten()
            .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// One RMSProp step: `v ← ρ v + (1 − ρ) g²`, `θ ← θ − lr · g / (√v + ε)`.
    /// `grads` is indexed by parameter id; missing entries are zero gradients
    /// and leave both the value and the accumulator's decay untouched.
    pub fn rmsprop_update(
        &mut self,
        grads: &[Option<Tensor>],
        cfg: &RmsPropConfig,
    ) -> Result<(), NnError> {
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            if g.shape() != self.values[i].shape() {
                return Err(NnError::ShapeMismatch {
                    op: "rmsprop",
                    left: self.values[i].shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            let v = self.mean_square[i].data_mut();
            let theta = self.values[i].data_mut();
            for ((t, s), &gr) in theta.iter_mut().zip(v.iter_mut()).zip(g.data()) {
                *s = cfg.decay * *s + (1.0 - cfg.decay) * gr * gr;
                *t -= cfg.lr * gr / (s.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    pub(crate) fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub(crate) fn names(&self) -> &[String] {
        &self.names
    }
}

/// Rescales gradients in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Option<Tensor>], max_norm: f64) -> f64 {
    let norm = ParameterStore::grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}
