//! Named parameter storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One learnable tensor together with its gradient buffer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    #[serde(skip)]
    pub grad: Vec<f64>,
    pub trainable: bool,
}

/// Layer-qualified parameters in insertion order.
///
/// Iteration order is the order in which layers registered their tensors, so
/// it is identical across runs and across save/load.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor, returning its slot index.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let grad = vec![0.0; value.len()];
        self.entries.push(Param {
            name,
            value,
            grad,
            trainable: true,
        });
        Ok(self.entries.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.iter_mut().find(|p| p.name == name)
    }

    pub fn value(&self, slot: usize) -> &[f64] {
        self.entries[slot].value.data()
    }

    pub fn value_mut(&mut self, slot: usize) -> &mut [f64] {
        self.entries[slot].value.data_mut()
    }

    pub fn grad_mut(&mut self, slot: usize) -> &mut [f64] {
        &mut self.entries[slot].grad
    }

    pub fn entry(&self, slot: usize) -> &Param {
        &self.entries[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            if p.grad.len() != p.value.len() {
                p.grad = vec![0.0; p.value.len()];
            } else {
                p.grad.iter_mut().for_each(|g| *g = 0.0);
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    pub fn num_trainable_scalars(&self) -> usize {
        self.entries.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn set_trainable_where(&mut self, mut pred: impl FnMut(&str) -> bool) {
        for p in &mut self.entries {
            p.trainable = pred(&p.name);
        }
    }

    /// Copies every value out, in store order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.entries.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) -> Result<()> {
        if snapshot.len() != self.entries.len() {
            return Err(Error::Usage("snapshot does not match parameter store".into()));
        }
        for (p, v) in self.entries.iter_mut().zip(snapshot) {
            if p.value.shape() != v.shape() {
                return Err(Error::Usage(format!("snapshot shape mismatch for {}", p.name)));
            }
            p.value.data_mut().copy_from_slice(v.data());
        }
        Ok(())
    }

    /// Replaces values by name from `other`; shapes must agree and every
    /// entry of `self` must be present in `other`.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.entries {
            let src = other
                .get(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {}", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    p.name,
                    src.value.shape(),
                    p.value.shape()
                )));
            }
            p.value.data_mut().copy_from_slice(src.value.data());
        }
        Ok(())
    }
}
