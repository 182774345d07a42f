use std::collections::HashMap;

use rand::Rng;

use super::{Gradients, Tensor};
use crate::error::{Error, Result};

/// Half-width of the uniform parameter initialization interval.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Clone, Debug, PartialEq)]
struct Param {
    name: String,
    tensor: Tensor,
    /// Rows of a matrix parameter excluded from updates.
    frozen_rows: Option<Vec<bool>>,
}

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter {name}")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            tensor,
            frozen_rows: None,
        });
        Ok(id)
    }

    /// Inserts a parameter drawn uniformly from `[-INIT_RANGE, INIT_RANGE]`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        rng: &mut R,
    ) -> Result<ParamId> {
        let numel = shape.iter().product();
        let values = (0..numel)
            .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        self.insert(name, Tensor::new(shape, values)?)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.tensor(id))
    }

    /// Overwrites values, keeping the shape.
    pub fn set_values(&mut self, id: ParamId, values: &[f64]) -> Result<()> {
        let t = self.tensor_mut(id);
        if t.numel() != values.len() {
            return Err(Error::Shape(format!(
                "{} values for a parameter of {}",
                values.len(),
                t.numel()
            )));
        }
        t.values_mut().copy_from_slice(values);
        Ok(())
    }

    pub fn freeze_rows(&mut self, id: ParamId, rows: Vec<bool>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.tensor.shape().len() != 2 || p.tensor.shape()[0] != rows.len() {
            return Err(Error::Shape(format!(
                "row mask of {} for shape {:?}",
                rows.len(),
                p.tensor.shape()
            )));
        }
        p.frozen_rows = Some(rows);
        Ok(())
    }

    /// Sets every gradient to zeros.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            let n = p.tensor.numel();
            p.tensor.grad = Some(vec![0.0; n]);
        }
    }

    /// Strips all gradients, leaving a frozen parameter set.
    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.tensor.grad = None;
        }
    }

    /// Adds a backward pass's gradients into the stored gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.iter() {
            let t = &mut self.params[id.0].tensor;
            let buf = t
                .grad_mut()
                .ok_or_else(|| Error::Usage("accumulate before zero_grads".into()))?;
            for (b, x) in buf.iter_mut().zip(g) {
                *b += x;
            }
        }
        Ok(())
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.tensor))
    }
}

/// Plain gradient descent: `values -= lr * grad`, then gradients are
/// cleared. Frozen rows are left untouched.
pub fn sgd_step(params: &mut ParamStore, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Usage(format!("learning rate must be non-negative, got {lr}")));
    }
    if let Some(p) = params.params.iter().find(|p| p.tensor.grad.is_none()) {
        return Err(Error::Usage(format!("parameter {} has no gradient", p.name)));
    }
    for p in &mut params.params {
        let grad = p.tensor.grad.take().expect("checked above");
        let cols = p.tensor.shape().last().copied().unwrap_or(1);
        let frozen = p.frozen_rows.as_deref();
        for (i, (v, g)) in p.tensor.values.iter_mut().zip(&grad).enumerate() {
            if frozen.is_some_and(|f| f[i / cols]) {
                continue;
            }
            *v -= lr * g;
        }
    }
    Ok(())
}
