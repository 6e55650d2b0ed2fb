//! Analytic gradients against central finite differences, in f64.

mod common;

use common::{
    max_rel_error, random_params, random_tensor, tiny_critic, tiny_critic_with, tiny_generator,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavegan_core::models::{forward, Layer, NetworkSpec, Role};
use wavegan_core::tensor::{Tape, Tensor};
use wavegan_core::train::{
    critic_loss_wgan_gp, generator_loss_wgan, vanilla_gan_loss, NetworkCritic,
};

const EPS: f64 = 1e-3;
/// Step for nets with leaky ReLU: small enough that no pre-activation
/// changes sign between the two evaluations.
const EPS_PIECEWISE: f64 = 1e-6;
const TOL: f64 = 1e-3;

fn spec(role: Role, input: &[usize], layers: Vec<Layer>) -> NetworkSpec {
    let s = NetworkSpec {
        role,
        model_dim: 1,
        input_shape: input.to_vec(),
        layers,
        skips: vec![],
    };
    s.validate().unwrap();
    s
}

#[test]
fn dense_tanh_two_layer_net() {
    let net = spec(
        Role::Discriminator,
        &[4],
        vec![
            Layer::Dense { inputs: 4, outputs: 5 },
            Layer::Tanh,
            Layer::Dense { inputs: 5, outputs: 1 },
        ],
    );
    let params = random_params(&net, 0.8, 1);
    assert!(params.count() <= 64);
    let x = random_tensor(&[3, 4], 1.0, 2);
    let err = max_rel_error(&params, EPS, |tape, vars| {
        let xv = tape.constant(x.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = forward(tape, &net, vars, xv, &mut rng).unwrap();
        tape.mean(tape.square(y)).unwrap()
    });
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn conv_then_transposed_conv_net() {
    let net = spec(
        Role::Autoencoder,
        &[16, 1],
        vec![
            Layer::Conv { kernel: 5, stride: 4, in_channels: 1, out_channels: 3 },
            Layer::LeakyRelu,
            Layer::ConvTranspose { kernel: 5, stride: 4, in_channels: 3, out_channels: 1 },
            Layer::Tanh,
        ],
    );
    let params = random_params(&net, 0.7, 3);
    assert!(params.count() <= 64);
    let x = random_tensor(&[2, 16, 1], 1.0, 4);
    let target = random_tensor(&[2, 16, 1], 0.5, 5);
    let err = max_rel_error(&params, EPS, |tape, vars| {
        let xv = tape.constant(x.clone());
        let tv = tape.constant(target.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = forward(tape, &net, vars, xv, &mut rng).unwrap();
        tape.mean(tape.square(tape.sub(y, tv).unwrap())).unwrap()
    });
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn mean_and_linear_gradients_are_exact() {
    let tape = Tape::<f64>::new();
    let x = tape.param(Tensor::from_f64(&[4], &[1.0, -2.0, 3.0, 0.5]).unwrap());
    let g = tape.backward(tape.mean(x).unwrap()).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.25; 4]);

    // loss = mean(w * x) over 4 entries: d/dw = x / 4
    let tape = Tape::<f64>::new();
    let w = tape.param(Tensor::from_f64(&[4], &[0.3, 0.1, -0.2, 0.9]).unwrap());
    let xs = [2.0, -1.0, 4.0, 8.0];
    let xc = tape.constant(Tensor::from_f64(&[4], &xs).unwrap());
    let g = tape.backward(tape.mean(tape.mul(w, xc).unwrap()).unwrap()).unwrap();
    let expect: Vec<f64> = xs.iter().map(|v| v / 4.0).collect();
    assert_eq!(g.get(w).unwrap().data(), expect.as_slice());
    assert!(g.get(xc).is_none());
}

#[test]
fn input_gradient_of_analytic_critics() {
    let tape = Tape::<f64>::new();
    let w = tape.constant(Tensor::from_f64(&[3, 1], &[0.5, -1.0, 2.0]).unwrap());
    let m = tape.param(random_tensor(&[2, 3], 1.0, 9));
    let g = tape
        .input_gradient::<wavegan_core::tensor::TensorError>(m, |tp, m| {
            let y = tp.matmul(m, w)?;
            tp.reshape(y, &[2])
        })
        .unwrap();
    assert_eq!(tape.value(g).data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);

    let mv = random_tensor(&[2, 3], 1.0, 10);
    let m = tape.param(mv.clone());
    let g = tape
        .input_gradient::<wavegan_core::tensor::TensorError>(m, |tp, m| {
            tp.sum_per_row(tp.square(m))
        })
        .unwrap();
    for (a, b) in tape.value(g).data().iter().zip(mv.data()) {
        assert!((a - 2.0 * b).abs() < 1e-12);
    }
}

#[test]
fn penalty_only_loss_through_input_gradient() {
    let critic = tiny_critic_with(Layer::Tanh, 0);
    let params = random_params(&critic, 0.3, 11);
    assert!(params.count() <= 200);
    let m = random_tensor(&[4, 64, 1], 1.0, 12);
    let err = max_rel_error(&params, EPS, |tape, vars| {
        let mv = tape.param(m.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = tape
            .input_gradient::<wavegan_core::models::ModelError>(mv, |tp, x| {
                let y = forward(tp, &critic, vars, x, &mut rng)?;
                Ok(tp.reshape(y, &[4])?)
            })
            .unwrap();
        let norms = tape.l2_norm_rows(g).unwrap();
        let dev = tape.offset(norms, -1.0);
        tape.scale(tape.mean(tape.square(dev)).unwrap(), 10.0)
    });
    assert!(err < TOL, "max relative error {err}");
}

fn full_critic_loss_error(critic: NetworkSpec, eps: f64, seed: u64) -> f64 {
    let params = random_params(&critic, 0.3, seed);
    assert!(params.count() <= 200);
    let fake = random_tensor(&[4, 64, 1], 1.0, seed + 1);
    let real = random_tensor(&[4, 64, 1], 1.0, seed + 2);
    max_rel_error(&params, eps, |tape, vars| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
        let mut d = NetworkCritic { spec: &critic, params: vars };
        critic_loss_wgan_gp(tape, &mut d, &fake, &real, 10.0, &mut rng)
            .unwrap()
            .total
    })
}

#[test]
fn full_regularised_critic_loss_smooth() {
    for seed in [20, 30, 40] {
        let err = full_critic_loss_error(tiny_critic_with(Layer::Tanh, 0), EPS, seed);
        assert!(err < TOL, "seed {seed}: max relative error {err}");
    }
}

#[test]
fn full_regularised_critic_loss_leaky_relu() {
    for seed in [20, 30, 40] {
        let err = full_critic_loss_error(tiny_critic(0), EPS_PIECEWISE, seed);
        assert!(err < TOL, "seed {seed}: max relative error {err}");
    }
}

#[test]
fn full_regularised_critic_loss_with_phase_shuffle() {
    let err = full_critic_loss_error(tiny_critic_with(Layer::Tanh, 1), EPS, 50);
    assert!(err < TOL, "max relative error {err}");
    let err = full_critic_loss_error(tiny_critic(1), EPS_PIECEWISE, 50);
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn generator_loss_reaches_generator_parameters() {
    let gen = tiny_generator();
    let critic = tiny_critic(0);
    let gen_params = random_params(&gen, 0.3, 60);
    let critic_params = random_params(&critic, 0.3, 61);
    let z = random_tensor(&[3, 100], 1.0, 62);
    let loss = |tape: &Tape<f64>, vars: &wavegan_core::models::ParamVars| {
        let cvars = critic_params.register(tape, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zv = tape.constant(z.clone());
        let fake = forward(tape, &gen, vars, zv, &mut rng).unwrap();
        let mut d = NetworkCritic { spec: &critic, params: &cvars };
        generator_loss_wgan(tape, &mut d, fake, &mut rng).unwrap()
    };
    let err = max_rel_error(&gen_params, EPS, loss);
    assert!(err < TOL, "max relative error {err}");

    let tape = Tape::new();
    let vars = gen_params.register(&tape, true);
    let grads = tape.backward(loss(&tape, &vars)).unwrap();
    let norm: f64 = grads.get(vars["00.weight"]).unwrap().data().iter().map(|v| v * v).sum();
    assert!(norm > 0.0);
}

#[test]
fn minimax_reference_loss() {
    let critic = tiny_critic_with(Layer::Tanh, 0);
    let params = random_params(&critic, 0.3, 70);
    let real = random_tensor(&[4, 64, 1], 1.0, 71);
    let fake = random_tensor(&[4, 64, 1], 1.0, 72);
    let err = max_rel_error(&params, EPS, |tape, vars| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut prob = |x: &Tensor<f64>| {
            let xv = tape.constant(x.clone());
            let y = forward(tape, &critic, vars, xv, &mut rng).unwrap();
            tape.sigmoid(y)
        };
        let (pr, pf) = (prob(&real), prob(&fake));
        vanilla_gan_loss(tape, pr, pf).unwrap()
    });
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn zero_lambda_is_the_unregularised_loss_exactly() {
    let critic = tiny_critic(0);
    let params = random_params(&critic, 0.3, 80);
    let fake = random_tensor(&[4, 64, 1], 1.0, 81);
    let real = random_tensor(&[4, 64, 1], 1.0, 82);

    let tape = Tape::new();
    let vars = params.register(&tape, true);
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let mut d = NetworkCritic { spec: &critic, params: &vars };
    let loss = critic_loss_wgan_gp(&tape, &mut d, &fake, &real, 0.0, &mut rng).unwrap();
    let grads = tape.backward(loss.total).unwrap();

    let plain_tape = Tape::new();
    let plain_vars = params.register(&plain_tape, true);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let score = |x: &Tensor<f64>, rng: &mut ChaCha8Rng| {
        let xv = plain_tape.constant(x.clone());
        let y = forward(&plain_tape, &critic, &plain_vars, xv, rng).unwrap();
        plain_tape.mean(y).unwrap()
    };
    let (sf, sr) = (score(&fake, &mut rng), score(&real, &mut rng));
    let plain = plain_tape.sub(sf, sr).unwrap();
    let plain_grads = plain_tape.backward(plain).unwrap();

    assert_eq!(tape.value(loss.total).item(), plain_tape.value(plain).item());
    for name in params.tensors.keys() {
        assert_eq!(
            grads.get(vars[name]).unwrap().data(),
            plain_grads.get(plain_vars[name]).unwrap().data(),
            "{name}"
        );
    }
}

#[test]
fn unit_norm_linear_network_critic_has_zero_penalty() {
    let critic = spec(
        Role::Discriminator,
        &[16, 1],
        vec![Layer::Reshape(vec![16]), Layer::Dense { inputs: 16, outputs: 1 }],
    );
    let mut params = random_params(&critic, 1.0, 0);
    params.tensors.values_mut().for_each(|t| t.data_mut().fill(0.0));
    let w = params.tensors.get_mut("01.weight").unwrap().data_mut();
    w[3] = 0.6;
    w[11] = -0.8;
    let tape = Tape::new();
    let vars = params.register(&tape, true);
    let mut d = NetworkCritic { spec: &critic, params: &vars };
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let fake = random_tensor(&[5, 16, 1], 1.0, 91);
    let real = random_tensor(&[5, 16, 1], 1.0, 92);
    let loss = critic_loss_wgan_gp(&tape, &mut d, &fake, &real, 10.0, &mut rng).unwrap();
    assert_eq!(tape.value(loss.penalty).item(), 0.0);
}
