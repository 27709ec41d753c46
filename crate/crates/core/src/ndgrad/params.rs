use serde::{Deserialize, Serialize};

use super::{GradError, Tensor};

/// Index of a tensor inside a [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Buffers (batch-norm running statistics) are stored alongside the
    /// weights but never touched by the optimizer or the gradient check.
    pub trainable: bool,
}

/// Manifest entry describing one stored tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

/// Flat store of every learnable tensor and buffer in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    params: Vec<Param>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, false)
    }

    fn push(&mut self, name: String, value: Tensor, trainable: bool) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param {
            name,
            value,
            grad,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        self.params[id.0].value.data()
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.params[id.0].value.data_mut()
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.params[id.0].grad.data_mut()
    }

    /// Mutable access to a parameter value and its gradient at once.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&[f64], &mut [f64]) {
        let p = &mut self.params[id.0];
        (p.value.data(), p.grad.data_mut())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn num_trainable(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        self.params
            .iter()
            .map(|p| ParamSpec {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                trainable: p.trainable,
            })
            .collect()
    }

    /// Round every stored value to the nearest `f32`, making the set exactly
    /// representable in the checkpoint payload.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            for v in p.value.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Copy values from `other`; both sets must share the same manifest.
    pub fn copy_values_from(&mut self, other: &ParameterSet) -> Result<(), GradError> {
        if self.specs() != other.specs() {
            return Err(GradError::Shape("parameter manifests differ".into()));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.value.data_mut().copy_from_slice(src.value.data());
        }
        Ok(())
    }
}
