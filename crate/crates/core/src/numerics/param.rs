use std::collections::HashMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor together with its gradient and Adam moments.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            name: name.into(),
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            step_count: 0,
            value,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Ordered collection of named parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter::new(name, value));
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
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

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
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

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Adds `grads` into each parameter's accumulated gradient.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            if let Some(g) = g {
                p.grad.add_assign(g);
            }
        }
    }

    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Tensor]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "snapshot has {} tensors, store has {}",
                values.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::ShapeMismatch {
                    op: "restore",
                    left: p.value.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            p.value = v.clone();
        }
        Ok(())
    }

    /// Copies values of every parameter whose name also exists in `other`.
    /// Returns how many were copied.
    pub fn copy_matching_from(&mut self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for p in self.params.iter_mut() {
            if let Some(id) = other.id(&p.name) {
                let src = other.value(id);
                if src.shape() != p.value.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "copy_matching_from",
                        left: p.value.shape().to_vec(),
                        right: src.shape().to_vec(),
                    });
                }
                p.value = src.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }
}

/// Per-parameter gradients produced by one backward pass, indexed by
/// [`ParamId`]. `None` means the parameter did not take part.
#[derive(Clone, Debug)]
pub struct Gradients(pub(crate) Vec<Option<Tensor>>);

impl Gradients {
    pub fn empty(n: usize) -> Self {
        Gradients(vec![None; n])
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.0.get(id.0).and_then(|g| g.as_ref())
    }

    pub(crate) fn add_owned(&mut self, id: ParamId, g: Tensor) {
        match &mut self.0[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Gradient of one scalar coordinate, treating absent gradients as zero.
    pub fn coord(&self, id: ParamId, index: usize) -> f64 {
        self.get(id).map_or(0.0, |g| g.data()[index])
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.0.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}
