use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::spec::NetworkSpec;
use super::{ModelError, Result};
use crate::tensor::{Tape, Tensor, Var};
use crate::Scalar;

pub const INIT_STD: f64 = 0.02;

pub fn weight_name(layer: usize) -> String {
    format!("{layer:02}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("{layer:02}.bias")
}

/// Named parameter tensors of one network, ordered by name.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub tensors: BTreeMap<String, Tensor<T>>,
}

/// Parameters registered on a tape, by name.
pub type ParamVars = BTreeMap<String, Var>;

impl<T: Scalar> ModelParams<T> {
    /// Weights drawn from `Normal(0, 0.02)`, biases zero.
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut tensors = BTreeMap::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            if let Some((ws, bs)) = layer.param_shapes() {
                let w = Tensor::from_fn(&ws, |_| T::of(normal.sample(rng)));
                tensors.insert(weight_name(i), w);
                tensors.insert(bias_name(i), Tensor::zeros(&bs));
            }
        }
        Self { tensors }
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let mut expected = 0;
        for (i, layer) in spec.layers.iter().enumerate() {
            let Some((ws, bs)) = layer.param_shapes() else {
                continue;
            };
            for (name, shape) in [(weight_name(i), ws), (bias_name(i), bs)] {
                expected += 1;
                let t = self
                    .tensors
                    .get(&name)
                    .ok_or_else(|| ModelError::MissingParam(name.clone()))?;
                if t.shape() != shape.as_slice() {
                    return Err(ModelError::ParamShape {
                        name,
                        expected: shape,
                        got: t.shape().to_vec(),
                    });
                }
            }
        }
        if expected != self.tensors.len() {
            return Err(ModelError::Param(format!(
                "{} parameter tensors for {expected} slots",
                self.tensors.len()
            )));
        }
        Ok(())
    }

    /// Registers every tensor on `tape`, tracked or constant.
    pub fn register(&self, tape: &Tape<T>, tracked: bool) -> ParamVars {
        self.tensors
            .iter()
            .map(|(name, t)| {
                let v = if tracked {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.tensors {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}
