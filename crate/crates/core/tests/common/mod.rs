#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavegan_core::models::{Layer, ModelParams, NetworkSpec, ParamVars, Role};
use wavegan_core::tensor::{Tape, Tensor, Var};

/// Entries whose analytic and numeric values are both below this are
/// compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// Worst `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)` over
/// every parameter entry, with central differences of step `eps`.
pub fn max_rel_error(
    params: &ModelParams<f64>,
    eps: f64,
    loss: impl Fn(&Tape<f64>, &ParamVars) -> Var,
) -> f64 {
    let tape = Tape::new();
    let vars = params.register(&tape, true);
    let l = loss(&tape, &vars);
    let grads = tape.backward(l).unwrap();
    let eval = |p: &ModelParams<f64>| {
        let tape = Tape::new();
        let vars = p.register(&tape, false);
        let l = loss(&tape, &vars);
        tape.value(l).item()
    };
    let mut worst: f64 = 0.0;
    for (name, t) in &params.tensors {
        let analytic = grads.get(vars[name]).unwrap();
        for i in 0..t.numel() {
            let mut plus = params.clone();
            plus.tensors.get_mut(name).unwrap().data_mut()[i] += eps;
            let mut minus = params.clone();
            minus.tensors.get_mut(name).unwrap().data_mut()[i] -= eps;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

/// Parameters with weights `N(0, std)`-like uniform draws and small biases.
pub fn random_params(spec: &NetworkSpec, scale: f64, seed: u64) -> ModelParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::<f64>::init(spec, &mut rng);
    for t in p.tensors.values_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
    p
}

pub fn random_tensor(shape: &[usize], scale: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Critic over `[64, 1]` inputs with 85 parameters: conv, leaky ReLU, phase
/// shuffle, dense.
pub fn tiny_critic(shuffle: usize) -> NetworkSpec {
    tiny_critic_with(Layer::LeakyRelu, shuffle)
}

/// [`tiny_critic`] with another activation after the convolution.
pub fn tiny_critic_with(activation: Layer, shuffle: usize) -> NetworkSpec {
    let mut layers = vec![
        Layer::Conv {
            kernel: 25,
            stride: 4,
            in_channels: 1,
            out_channels: 2,
        },
        activation,
    ];
    if shuffle > 0 {
        layers.push(Layer::PhaseShuffle(shuffle));
    }
    layers.push(Layer::Reshape(vec![32]));
    layers.push(Layer::Dense {
        inputs: 32,
        outputs: 1,
    });
    let spec = NetworkSpec {
        role: Role::Discriminator,
        model_dim: 1,
        input_shape: vec![64, 1],
        layers,
        skips: vec![],
    };
    spec.validate().unwrap();
    spec
}

/// Generator from 100-dimensional noise to `[64, 1]` audio.
pub fn tiny_generator() -> NetworkSpec {
    let spec = NetworkSpec {
        role: Role::Generator,
        model_dim: 1,
        input_shape: vec![100],
        layers: vec![
            Layer::Dense {
                inputs: 100,
                outputs: 8,
            },
            Layer::Reshape(vec![4, 2]),
            Layer::Relu,
            Layer::ConvTranspose {
                kernel: 5,
                stride: 4,
                in_channels: 2,
                out_channels: 1,
            },
            Layer::Tanh,
            Layer::ConvTranspose {
                kernel: 1,
                stride: 4,
                in_channels: 1,
                out_channels: 1,
            },
        ],
        skips: vec![],
    };
    spec.validate().unwrap();
    spec
}
