use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forward::apply;
use super::params::ModelParams;
use super::spec::{NetworkSpec, Role, Z_DIM};
use super::{ModelError, Result};
use crate::tensor::Tensor;
use crate::Scalar;

/// Distribution of the generator's noise vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NoiseRange {
    /// `U(-1, 1)`
    #[default]
    UnitSigned,
    /// `U(0, 1)`
    UnitPositive,
}

impl NoiseRange {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseRange::UnitSigned => "unit_signed",
            NoiseRange::UnitPositive => "unit_positive",
        }
    }
}

impl std::str::FromStr for NoiseRange {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_signed" => Ok(NoiseRange::UnitSigned),
            "unit_positive" => Ok(NoiseRange::UnitPositive),
            _ => Err(ModelError::Parse(format!("unknown noise range `{s}`"))),
        }
    }
}

/// `[batch, 100]` noise vectors.
pub fn sample_noise<T: Scalar, R: Rng + ?Sized>(
    batch: usize,
    range: NoiseRange,
    rng: &mut R,
) -> Tensor<T> {
    let lo = match range {
        NoiseRange::UnitSigned => -1.0,
        NoiseRange::UnitPositive => 0.0,
    };
    Tensor::from_fn(&[batch, Z_DIM], |_| T::of(rng.random_range(lo..1.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage<T> {
    pub spec: NetworkSpec,
    pub params: ModelParams<T>,
}

/// Noise-driven generator followed by zero or more audio-to-audio stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline<T> {
    stages: Vec<Stage<T>>,
}

/// Validates that each stage consumes the previous stage's output.
pub fn chain<T: Scalar>(stages: Vec<Stage<T>>) -> Result<Pipeline<T>> {
    let first = stages
        .first()
        .ok_or_else(|| ModelError::Chain("no stages".into()))?;
    if first.spec.role != Role::Generator {
        return Err(ModelError::Chain(
            "first stage must be a noise-driven generator".into(),
        ));
    }
    for (i, stage) in stages.iter().enumerate() {
        stage.params.check(&stage.spec)?;
        if stage.spec.role == Role::Discriminator {
            return Err(ModelError::Chain(format!("stage {i} is a discriminator")));
        }
        if i > 0 {
            let prev = stages[i - 1].spec.output_shape()?;
            if prev != stage.spec.input_shape {
                return Err(ModelError::Chain(format!(
                    "stage {i} expects {:?} but stage {} emits {prev:?}",
                    stage.spec.input_shape,
                    i - 1
                )));
            }
        }
    }
    Ok(Pipeline { stages })
}

impl<T: Scalar> Pipeline<T> {
    pub fn stages(&self) -> &[Stage<T>] {
        &self.stages
    }

    /// Outputs of every stage for a batch of noise vectors, first stage first.
    pub fn run_all(&self, z: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        // generator and autoencoder layers never draw randomness
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let input = outs.last().unwrap_or(z);
            outs.push(apply(&stage.spec, &stage.params, input, &mut rng)?);
        }
        Ok(outs)
    }

    /// Final refined output, `[batch, 16384, 1]`.
    pub fn run(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run_all(z)?.pop().expect("pipeline has a stage"))
    }
}
