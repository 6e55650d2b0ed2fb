//! Tensor operations against brute-force oracles, plus the adjoint and
//! shape-algebra properties of the convolutions.

mod common;

use common::random_tensor;
use proptest::prelude::*;
use wavegan_core::tensor::{Tape, Tensor};

/// Zero-padded strided cross-correlation, written independently of the
/// engine's geometry helper.
fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize) -> Tensor<f64> {
    let (b, l, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kw, cout) = (k.shape()[0], k.shape()[2]);
    let out = l.div_ceil(stride);
    let pad_total = ((out - 1) * stride + kw).saturating_sub(l);
    let pad = pad_total / 2;
    let mut y = vec![0.0; b * out * cout];
    for bi in 0..b {
        for o in 0..out {
            for co in 0..cout {
                let mut s = 0.0;
                for t in 0..kw {
                    let pos = (o * stride + t) as isize - pad as isize;
                    if pos < 0 || pos >= l as isize {
                        continue;
                    }
                    for ci in 0..cin {
                        s += x.data()[(bi * l + pos as usize) * cin + ci]
                            * k.data()[(t * cin + ci) * cout + co];
                    }
                }
                y[(bi * out + o) * cout + co] = s;
            }
        }
    }
    Tensor::new(&[b, out, cout], y).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

#[test]
fn dense_examples() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_f64(&[1, 2], &[1.0, 2.0]).unwrap());
    let w = tape.constant(Tensor::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap());
    let b = tape.constant(Tensor::zeros(&[2]));
    assert_eq!(tape.value(tape.dense(x, w, b).unwrap()).data(), &[1.0, 2.0]);

    let x = tape.constant(Tensor::from_f64(&[1, 2], &[1.0, 1.0]).unwrap());
    let w = tape.constant(Tensor::from_f64(&[2, 1], &[2.0, 3.0]).unwrap());
    let b = tape.constant(Tensor::from_f64(&[1], &[1.0]).unwrap());
    assert_eq!(tape.value(tape.dense(x, w, b).unwrap()).data(), &[6.0]);
}

#[test]
fn dense_matches_triple_loop() {
    let x = random_tensor(&[3, 4], 1.0, 1);
    let w = random_tensor(&[4, 2], 1.0, 2);
    let bias = random_tensor(&[2], 1.0, 3);
    let tape = Tape::new();
    let (xv, wv, bv) = (
        tape.constant(x.clone()),
        tape.constant(w.clone()),
        tape.constant(bias.clone()),
    );
    let got = tape.value(tape.dense(xv, wv, bv).unwrap());
    let mut expect = vec![0.0; 6];
    for i in 0..3 {
        for o in 0..2 {
            let mut s = bias.data()[o];
            for k in 0..4 {
                s += x.data()[i * 4 + k] * w.data()[k * 2 + o];
            }
            expect[i * 2 + o] = s;
        }
    }
    assert!(close(got.data(), &expect, 1e-12));
}

#[test]
fn conv_of_centred_impulse_is_reversed_kernel() {
    let (l, kw) = (21, 7);
    let mut x = vec![0.0; l];
    x[10] = 1.0;
    let k = random_tensor(&[kw, 1, 1], 1.0, 4);
    let tape = Tape::new();
    let xv = tape.constant(Tensor::from_f64(&[1, l, 1], &x).unwrap());
    let kv = tape.constant(k.clone());
    let y = tape.value(tape.conv1d(xv, kv, 1).unwrap());
    // y[o] = k[10 - o + 3] around the impulse, zero elsewhere
    for o in 0..l {
        let t = 10 + 3 - o as isize;
        let expect = if (0..kw as isize).contains(&t) { k.data()[t as usize] } else { 0.0 };
        assert_eq!(y.data()[o], expect, "o = {o}");
    }
}

#[test]
fn identity_kernel_and_lengths() {
    let x = random_tensor(&[2, 16, 1], 1.0, 5);
    let tape = Tape::new();
    let xv = tape.constant(x.clone());
    let id = tape.constant(Tensor::from_f64(&[3, 1, 1], &[0.0, 1.0, 0.0]).unwrap());
    assert_eq!(tape.value(tape.conv1d(xv, id, 1).unwrap()).data(), x.data());
    let k = tape.constant(random_tensor(&[25, 1, 1], 1.0, 6));
    assert_eq!(tape.shape(tape.conv1d(xv, k, 4).unwrap()), vec![2, 4, 1]);
    assert_eq!(tape.shape(tape.conv1d_transpose(xv, k, 4).unwrap()), vec![2, 64, 1]);
}

#[test]
fn transposed_chain_reaches_clip_length() {
    let tape = Tape::<f32>::new();
    let mut h = tape.constant(Tensor::zeros(&[1, 16, 1]));
    let k = tape.constant(Tensor::zeros(&[25, 1, 1]));
    let mut lengths = vec![16];
    for _ in 0..5 {
        h = tape.conv1d_transpose(h, k, 4).unwrap();
        lengths.push(tape.shape(h)[1]);
    }
    assert_eq!(lengths, vec![16, 64, 256, 1024, 4096, 16384]);
    assert_eq!(tape.shape(h), vec![1, 16384, 1]);
}

#[test]
fn activation_examples() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_f64(&[3], &[-1.0, 0.0, 2.0]).unwrap());
    assert_eq!(tape.value(tape.relu(x)).data(), &[0.0, 0.0, 2.0]);
    let x = tape.constant(Tensor::from_f64(&[2], &[-1.0, 2.0]).unwrap());
    assert_eq!(tape.value(tape.lrelu(x, 0.2)).data(), &[-0.2, 2.0]);
    let x = tape.constant(Tensor::from_f64(&[1], &[0.0]).unwrap());
    assert_eq!(tape.value(tape.tanh(x)).data(), &[0.0]);
    let x = tape.constant(Tensor::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap());
    assert_eq!(tape.value(tape.mean(x).unwrap()).item(), 2.0);
    let x = tape.constant(Tensor::from_f64(&[2], &[3.0, 4.0]).unwrap());
    assert_eq!(tape.value(tape.l2_norm(x).unwrap()).item(), 5.0);
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let tape = Tape::<f32>::new();
        let x = tape.constant(random_tensor(&[2, 64, 1], 1.0, 7).cast());
        let k = tape.param(random_tensor(&[25, 1, 3], 0.3, 8).cast());
        let y = tape.tanh(tape.conv1d(x, k, 4).unwrap());
        let l = tape.mean(tape.square(y)).unwrap();
        let g = tape.backward(l).unwrap();
        (tape.value(l).item(), g.get(k).unwrap().clone())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_matches_oracle(
        b in 1usize..3, l in 1usize..40, half in 0usize..5, stride in 1usize..5,
        cin in 1usize..4, cout in 1usize..4, seed in 0u64..1000,
    ) {
        let kw = 2 * half + 1;
        let x = random_tensor(&[b, l, cin], 1.0, seed);
        let k = random_tensor(&[kw, cin, cout], 1.0, seed + 1);
        let tape = Tape::new();
        let y = tape.conv1d(tape.constant(x.clone()), tape.constant(k.clone()), stride).unwrap();
        let expect = conv_oracle(&x, &k, stride);
        prop_assert_eq!(tape.shape(y), expect.shape().to_vec());
        prop_assert!(close(tape.value(y).data(), expect.data(), 1e-12));
    }

    /// <conv1d_transpose(x, k), y> == <x, conv1d(y, k)>
    #[test]
    fn transposed_conv_is_adjoint(
        b in 1usize..3, l in 1usize..24, half in 0usize..13, stride in 1usize..6,
        cin in 1usize..4, cout in 1usize..4, seed in 0u64..1000,
    ) {
        let kw = 2 * half + 1;
        // kernel of the forward conv: [K, conv_in = transposed out, conv_out = transposed in]
        let k = random_tensor(&[kw, cout, cin], 1.0, seed);
        let x = random_tensor(&[b, l, cin], 1.0, seed + 1);
        let y = random_tensor(&[b, l * stride, cout], 1.0, seed + 2);
        let tape = Tape::new();
        let kv = tape.constant(k);
        let t = tape.conv1d_transpose(tape.constant(x.clone()), kv, stride).unwrap();
        let c = tape.conv1d(tape.constant(y.clone()), kv, stride).unwrap();
        let lhs = tape.value(t).dot(&y).unwrap();
        let rhs = x.dot(&tape.value(c)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(rhs.abs()).max(1e-12),
            "lhs {} rhs {}", lhs, rhs);
    }

    #[test]
    fn conv_then_transposed_restores_length(m in 1usize..30, stride in 1usize..6, half in 0usize..13) {
        let l = m * stride;
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[1, l, 2]));
        let k = tape.constant(Tensor::zeros(&[2 * half + 1, 2, 2]));
        let down = tape.conv1d(x, k, stride).unwrap();
        let up = tape.conv1d_transpose(down, k, stride).unwrap();
        prop_assert_eq!(tape.shape(up), vec![1, l, 2]);
    }
}
