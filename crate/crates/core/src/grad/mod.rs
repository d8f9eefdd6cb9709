//! Dense tensors and a reverse-mode tape.
//!
//! Every primitive records its inputs on a [`Tape`]; [`Tape::backward`] walks
//! the record in reverse and accumulates exact adjoints. Parameters live
//! outside the tape in a [`ParamStore`] and are bound to leaves per forward
//! pass, so independent tapes can run side by side over one read-only model.

pub mod check;
pub mod kernels;
mod tape;
mod tensor;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub id: String,
    pub value: Tensor,
    #[serde(skip_serializing, default = "empty_grad")]
    pub grad: Tensor,
}

fn empty_grad() -> Tensor {
    Tensor::zeros(&[1])
}

impl Parameter {
    pub fn new(id: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { id: id.into(), value, grad }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn zero_grad(&mut self) {
        if self.grad.shape() != self.value.shape() {
            self.grad = Tensor::zeros(self.value.shape());
        } else {
            self.grad.fill(0.0);
        }
    }
}

/// Ordered collection of parameters with unique ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: BTreeMap<String, usize>,
}

/// Tape leaves bound to each parameter of a store for one forward pass.
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: Vec<Option<Var>>,
}

impl Bindings {
    pub fn var(&self, slot: usize) -> Var {
        self.vars[slot].expect("parameter not bound")
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its slot.
    pub fn insert(&mut self, param: Parameter) -> Result<usize> {
        if self.index.contains_key(&param.id) {
            return Err(Error::ParameterMismatch(format!("duplicate id {}", param.id)));
        }
        let slot = self.params.len();
        self.index.insert(param.id.clone(), slot);
        self.params.push(param);
        Ok(slot)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn get(&self, slot: usize) -> &Parameter {
        &self.params[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Parameter {
        &mut self.params[slot]
    }

    pub fn slot_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn by_id(&self, id: &str) -> Option<&Parameter> {
        self.slot_of(id).map(|s| &self.params[s])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.id.as_str())
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(Parameter::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Records every parameter on `tape`. Slots for which `trainable` is
    /// false become constants and receive no gradient.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(usize) -> bool) -> Bindings {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(slot, p)| {
                Some(if trainable(slot) { tape.leaf(p.value.clone()) } else { tape.constant(p.value.clone()) })
            })
            .collect();
        Bindings { vars }
    }

    /// Like [`bind`](Self::bind), but records only the slots for which
    /// `include` holds; the rest stay unbound.
    pub fn bind_subset(&self, tape: &mut Tape, include: impl Fn(usize) -> bool, trainable: impl Fn(usize) -> bool) -> Bindings {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(slot, p)| {
                include(slot).then(|| if trainable(slot) { tape.leaf(p.value.clone()) } else { tape.constant(p.value.clone()) })
            })
            .collect();
        Bindings { vars }
    }

    /// Adds each bound parameter's gradient into `Parameter::grad`.
    pub fn accumulate(&mut self, grads: &Gradients, bindings: &Bindings) -> Result<()> {
        for (p, var) in self.params.iter_mut().zip(&bindings.vars) {
            if let Some(var) = var {
                if p.grad.shape() != p.value.shape() {
                    p.zero_grad();
                }
                grads.accumulate(*var, &mut p.grad)?;
            }
        }
        Ok(())
    }
}
