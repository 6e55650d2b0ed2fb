use std::rc::Rc;

use rand::Rng;

use super::params::{bias_name, weight_name, ModelParams, ParamVars};
use super::spec::{Layer, NetworkSpec, LRELU_ALPHA};
use super::{ModelError, Result};
use crate::tensor::{Tape, Tensor, TensorError, Var};
use crate::Scalar;

fn reflect(i: isize, len: usize) -> usize {
    let last = len as isize - 1;
    let j = if i < 0 {
        -i
    } else if i > last {
        2 * last - i
    } else {
        i
    };
    j as usize
}

/// Flat gather map for shifting each `(batch, channel)` column of a
/// `[B, L, C]` tensor by `shifts[b * C + c]`, mirroring at both ends:
/// `out[i] = in[i + k]`.
pub fn shuffle_index(shape: &[usize], shifts: &[isize]) -> Result<Vec<usize>> {
    let [batch, len, chans] = *shape else {
        return Err(ModelError::Param(format!(
            "phase shuffle needs [B, L, C], got {shape:?}"
        )));
    };
    if shifts.len() != batch * chans {
        return Err(ModelError::Param("one shift per (batch, channel)".into()));
    }
    if shifts.iter().any(|k| k.unsigned_abs() >= len) {
        return Err(ModelError::Param(format!(
            "shift exceeds length {len}"
        )));
    }
    let mut index = vec![0; batch * len * chans];
    for b in 0..batch {
        for c in 0..chans {
            let k = shifts[b * chans + c];
            for i in 0..len {
                let src = reflect(i as isize + k, len);
                index[(b * len + i) * chans + c] = (b * len + src) * chans + c;
            }
        }
    }
    Ok(index)
}

/// Shifts every `(batch, channel)` column by an offset drawn uniformly from
/// `-n..=n` with mirror boundaries. `n = 0` is the identity and draws nothing.
pub fn phase_shuffle<T: Scalar, R: Rng + ?Sized>(
    tape: &Tape<T>,
    x: Var,
    n: usize,
    rng: &mut R,
) -> Result<Var> {
    let shape = tape.shape(x);
    if shape.len() != 3 || shape[1] <= n {
        return Err(ModelError::Param(format!(
            "phase shuffle of {n} needs length > {n}, got {shape:?}"
        )));
    }
    if n == 0 {
        return Ok(x);
    }
    let n = n as i64;
    let shifts: Vec<isize> = (0..shape[0] * shape[2])
        .map(|_| rng.random_range(-n..=n) as isize)
        .collect();
    let index = shuffle_index(&shape, &shifts)?;
    Ok(tape.gather(x, Rc::new(index))?)
}

fn param(params: &ParamVars, name: String) -> Result<Var> {
    params
        .get(&name)
        .copied()
        .ok_or(ModelError::MissingParam(name))
}

fn apply_layer<T: Scalar, R: Rng + ?Sized>(
    tape: &Tape<T>,
    layer: &Layer,
    index: usize,
    params: &ParamVars,
    h: Var,
    rng: &mut R,
) -> Result<Var> {
    let at = |e: TensorError| ModelError::Layer { index, source: e };
    let batch = tape.shape(h)[0];
    Ok(match layer {
        Layer::Dense { .. } => {
            let w = param(params, weight_name(index))?;
            let b = param(params, bias_name(index))?;
            tape.dense(h, w, b).map_err(at)?
        }
        Layer::Conv { stride, .. } => {
            let w = param(params, weight_name(index))?;
            let b = param(params, bias_name(index))?;
            let y = tape.conv1d(h, w, *stride).map_err(at)?;
            tape.add_channel_bias(y, b).map_err(at)?
        }
        Layer::ConvTranspose { stride, .. } => {
            let w = param(params, weight_name(index))?;
            let b = param(params, bias_name(index))?;
            let y = tape.conv1d_transpose(h, w, *stride).map_err(at)?;
            tape.add_channel_bias(y, b).map_err(at)?
        }
        Layer::Relu => tape.relu(h),
        Layer::LeakyRelu => tape.lrelu(h, T::of(LRELU_ALPHA)),
        Layer::Tanh => tape.tanh(h),
        Layer::Reshape(shape) => {
            let mut full = vec![batch];
            full.extend_from_slice(shape);
            tape.reshape(h, &full).map_err(at)?
        }
        Layer::PhaseShuffle(n) => phase_shuffle(tape, h, *n, rng).map_err(|e| match e {
            ModelError::Tensor(t) => at(t),
            other => ModelError::LayerShape {
                index,
                detail: other.to_string(),
            },
        })?,
    })
}

/// Evaluates `spec` on a batched `input` (`[B, ...input_shape]`), recording
/// on `tape`. Skip activations are added before the receiving layer runs.
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    tape: &Tape<T>,
    spec: &NetworkSpec,
    params: &ParamVars,
    input: Var,
    rng: &mut R,
) -> Result<Var> {
    let shape = tape.shape(input);
    if shape.len() != spec.input_shape.len() + 1 || shape[1..] != spec.input_shape[..] {
        return Err(ModelError::Input {
            expected: spec.input_shape.clone(),
            got: shape,
        });
    }
    let mut acts = Vec::with_capacity(spec.layers.len() + 1);
    acts.push(input);
    for (i, layer) in spec.layers.iter().enumerate() {
        let mut h = acts[i];
        for &(from, _) in spec.skips.iter().filter(|(_, to)| *to == i) {
            h = tape
                .add(h, acts[from])
                .map_err(|e| ModelError::Layer { index: i, source: e })?;
        }
        acts[i] = h;
        acts.push(apply_layer(tape, layer, i, params, h, rng)?);
    }
    let last = spec.layers.len();
    let mut out = acts[last];
    for &(from, _) in spec.skips.iter().filter(|(_, to)| *to == last) {
        out = tape.add(out, acts[from])?;
    }
    Ok(out)
}

/// Untracked evaluation on a throwaway tape.
pub fn apply<T: Scalar, R: Rng + ?Sized>(
    spec: &NetworkSpec,
    params: &ModelParams<T>,
    input: &Tensor<T>,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let tape = Tape::new();
    let vars = params.register(&tape, false);
    let x = tape.constant(input.clone());
    let y = forward(&tape, spec, &vars, x, rng)?;
    Ok((*tape.value(y)).clone())
}
