use std::fmt;
use std::str::FromStr;

use super::{ModelError, Result};
use crate::tensor::kernels::ConvGeometry;

pub const Z_DIM: usize = 100;
pub const KERNEL: usize = 25;
pub const STRIDE: usize = 4;
pub const LRELU_ALPHA: f64 = 0.2;
pub const DEFAULT_SHUFFLE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Generator,
    Discriminator,
    Autoencoder,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
            Role::Autoencoder => "autoencoder",
        }
    }
}

impl FromStr for Role {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generator" => Ok(Role::Generator),
            "discriminator" => Ok(Role::Discriminator),
            "autoencoder" => Ok(Role::Autoencoder),
            _ => Err(ModelError::Parse(format!("unknown role `{s}`"))),
        }
    }
}

/// One layer of a network. Shapes below exclude the batch axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    /// `[inputs] -> [outputs]`
    Dense { inputs: usize, outputs: usize },
    /// `[L, in] -> [ceil(L / stride), out]`
    Conv {
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
    },
    /// `[L, in] -> [L * stride, out]`
    ConvTranspose {
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
    },
    Relu,
    LeakyRelu,
    Tanh,
    Reshape(Vec<usize>),
    PhaseShuffle(usize),
}

impl Layer {
    pub fn has_params(&self) -> bool {
        matches!(
            self,
            Layer::Dense { .. } | Layer::Conv { .. } | Layer::ConvTranspose { .. }
        )
    }

    /// `(weight shape, bias shape)` of a parameterised layer. Transposed
    /// convolution kernels are stored `[K, out, in]`, the layout of the
    /// convolution they are the adjoint of.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            Layer::Dense { inputs, outputs } => Some((vec![inputs, outputs], vec![outputs])),
            Layer::Conv {
                kernel,
                in_channels,
                out_channels,
                ..
            } => Some((vec![kernel, in_channels, out_channels], vec![out_channels])),
            Layer::ConvTranspose {
                kernel,
                in_channels,
                out_channels,
                ..
            } => Some((vec![kernel, out_channels, in_channels], vec![out_channels])),
            _ => None,
        }
    }

    /// Output shape for a given input shape, or `None` if they do not fit.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match self {
            Layer::Dense { inputs, outputs } => (input == [*inputs]).then(|| vec![*outputs]),
            Layer::Conv {
                kernel,
                stride,
                in_channels,
                out_channels,
            } => match input {
                [len, c] if c == in_channels && *stride > 0 && kernel % 2 == 1 => {
                    Some(vec![ConvGeometry::new(*len, *kernel, *stride).out_len, *out_channels])
                }
                _ => None,
            },
            Layer::ConvTranspose {
                kernel,
                stride,
                in_channels,
                out_channels,
            } => match input {
                [len, c] if c == in_channels && *stride > 0 && kernel % 2 == 1 => {
                    Some(vec![len * stride, *out_channels])
                }
                _ => None,
            },
            Layer::Relu | Layer::LeakyRelu | Layer::Tanh => Some(input.to_vec()),
            Layer::Reshape(shape) => (shape.iter().product::<usize>()
                == input.iter().product::<usize>())
            .then(|| shape.clone()),
            Layer::PhaseShuffle(n) => match input {
                [len, _] if len > n => Some(input.to_vec()),
                _ => None,
            },
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Dense { inputs, outputs } => write!(f, "dense:{inputs}:{outputs}"),
            Layer::Conv {
                kernel,
                stride,
                in_channels,
                out_channels,
            } => write!(f, "conv:{kernel}:{stride}:{in_channels}:{out_channels}"),
            Layer::ConvTranspose {
                kernel,
                stride,
                in_channels,
                out_channels,
            } => write!(f, "tconv:{kernel}:{stride}:{in_channels}:{out_channels}"),
            Layer::Relu => f.write_str("relu"),
            Layer::LeakyRelu => f.write_str("lrelu"),
            Layer::Tanh => f.write_str("tanh"),
            Layer::Reshape(s) => write!(f, "reshape:{}", join_dims(s)),
            Layer::PhaseShuffle(n) => write!(f, "shuffle:{n}"),
        }
    }
}

fn join_dims(s: &[usize]) -> String {
    s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| {
            d.parse()
                .map_err(|_| ModelError::Parse(format!("bad dimension `{d}`")))
        })
        .collect()
}

impl FromStr for Layer {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums = |n: usize| -> Result<Vec<usize>> {
            if parts.len() != n + 1 {
                return Err(ModelError::Parse(format!("layer `{s}` needs {n} fields")));
            }
            parts[1..]
                .iter()
                .map(|p| {
                    p.parse()
                        .map_err(|_| ModelError::Parse(format!("bad number in `{s}`")))
                })
                .collect()
        };
        Ok(match parts[0] {
            "dense" => {
                let v = nums(2)?;
                Layer::Dense {
                    inputs: v[0],
                    outputs: v[1],
                }
            }
            "conv" | "tconv" => {
                let v = nums(4)?;
                let (kernel, stride, in_channels, out_channels) = (v[0], v[1], v[2], v[3]);
                if parts[0] == "conv" {
                    Layer::Conv {
                        kernel,
                        stride,
                        in_channels,
                        out_channels,
                    }
                } else {
                    Layer::ConvTranspose {
                        kernel,
                        stride,
                        in_channels,
                        out_channels,
                    }
                }
            }
            "relu" => Layer::Relu,
            "lrelu" => Layer::LeakyRelu,
            "tanh" => Layer::Tanh,
            "reshape" if parts.len() == 2 => Layer::Reshape(parse_dims(parts[1])?),
            "shuffle" => Layer::PhaseShuffle(nums(1)?[0]),
            _ => return Err(ModelError::Parse(format!("unknown layer `{s}`"))),
        })
    }
}

/// Declarative network: ordered layers plus additive skip connections.
///
/// Activation `0` is the network input and activation `i + 1` the output of
/// layer `i`. A skip `(from, to)` adds activation `from` onto activation `to`
/// before layer `to` consumes it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub role: Role,
    pub model_dim: usize,
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    pub skips: Vec<(usize, usize)>,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(ModelError::Param("model_dim must be at least 1".into()));
    }
    Ok(())
}

fn conv(cin: usize, cout: usize) -> Layer {
    Layer::Conv {
        kernel: KERNEL,
        stride: STRIDE,
        in_channels: cin,
        out_channels: cout,
    }
}

fn tconv(cin: usize, cout: usize) -> Layer {
    Layer::ConvTranspose {
        kernel: KERNEL,
        stride: STRIDE,
        in_channels: cin,
        out_channels: cout,
    }
}

/// Noise `[100]` -> dense -> `[16, 16d]` -> five stride-4 transposed
/// convolutions halving the channels -> tanh `[16384, 1]`.
pub fn build_generator(d: usize) -> Result<NetworkSpec> {
    check_dim(d)?;
    let mut layers = vec![
        Layer::Dense {
            inputs: Z_DIM,
            outputs: 16 * 16 * d,
        },
        Layer::Reshape(vec![16, 16 * d]),
        Layer::Relu,
    ];
    let channels = [16 * d, 8 * d, 4 * d, 2 * d, d, 1];
    for (i, w) in channels.windows(2).enumerate() {
        layers.push(tconv(w[0], w[1]));
        layers.push(if i == 4 { Layer::Tanh } else { Layer::Relu });
    }
    let spec = NetworkSpec {
        role: Role::Generator,
        model_dim: d,
        input_shape: vec![Z_DIM],
        layers,
        skips: Vec::new(),
    };
    spec.validate()?;
    Ok(spec)
}

/// `[16384, 1]` -> five stride-4 convolutions (1 -> d -> ... -> 16d) with
/// leaky ReLU and phase shuffle after the first four -> dense -> one
/// unbounded score.
pub fn build_discriminator(d: usize, shuffle_n: usize) -> Result<NetworkSpec> {
    check_dim(d)?;
    let channels = [1, d, 2 * d, 4 * d, 8 * d, 16 * d];
    let mut layers = Vec::new();
    for (i, w) in channels.windows(2).enumerate() {
        layers.push(conv(w[0], w[1]));
        layers.push(Layer::LeakyRelu);
        if i < 4 && shuffle_n > 0 {
            layers.push(Layer::PhaseShuffle(shuffle_n));
        }
    }
    layers.push(Layer::Reshape(vec![16 * 16 * d]));
    layers.push(Layer::Dense {
        inputs: 16 * 16 * d,
        outputs: 1,
    });
    let spec = NetworkSpec {
        role: Role::Discriminator,
        model_dim: d,
        input_shape: vec![crate::audio::CLIP_LEN, 1],
        layers,
        skips: Vec::new(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Audio-to-audio encoder/decoder. Four stride-4 convolutions reach a
/// `[64, 8d]` bottleneck, four transposed convolutions return to
/// `[16384, 1]`. Each transposed convolution's output receives the input of
/// its mirrored convolution by addition.
pub fn build_autoencoder(d: usize) -> Result<NetworkSpec> {
    check_dim(d)?;
    let channels = [1, d, 2 * d, 4 * d, 8 * d];
    let mut layers = Vec::new();
    // encoder activations entering each convolution, innermost last
    let mut conv_inputs = Vec::new();
    for w in channels.windows(2) {
        conv_inputs.push(layers.len());
        layers.push(conv(w[0], w[1]));
        layers.push(Layer::LeakyRelu);
    }
    let mut skips = Vec::new();
    for (i, w) in channels.windows(2).rev().enumerate() {
        layers.push(tconv(w[1], w[0]));
        skips.push((conv_inputs[3 - i], layers.len()));
        layers.push(if i == 3 { Layer::Tanh } else { Layer::Relu });
    }
    let spec = NetworkSpec {
        role: Role::Autoencoder,
        model_dim: d,
        input_shape: vec![crate::audio::CLIP_LEN, 1],
        layers,
        skips,
    };
    spec.validate()?;
    Ok(spec)
}

impl NetworkSpec {
    /// Per-example shapes of every activation, input first.
    pub fn shape_trace(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let input = &shapes[i];
            let out = layer.output_shape(input).ok_or_else(|| ModelError::LayerShape {
                index: i,
                detail: format!("{layer} cannot take input {input:?}"),
            })?;
            shapes.push(out);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shape_trace()?.pop().unwrap_or_default())
    }

    pub fn validate(&self) -> Result<()> {
        let trace = self.shape_trace()?;
        if self.role == Role::Generator && self.input_shape != [Z_DIM] {
            return Err(ModelError::Param(format!(
                "generator input must be [{Z_DIM}], got {:?}",
                self.input_shape
            )));
        }
        if !self.skips.is_empty() && self.role != Role::Autoencoder {
            return Err(ModelError::Param(
                "skip connections are only valid for autoencoders".into(),
            ));
        }
        for &(from, to) in &self.skips {
            if from >= to || to >= trace.len() {
                return Err(ModelError::Param(format!("invalid skip {from}->{to}")));
            }
            if trace[from] != trace[to] {
                return Err(ModelError::Param(format!(
                    "skip {from}->{to} joins {:?} and {:?}",
                    trace[from], trace[to]
                )));
            }
        }
        Ok(())
    }

    /// Length axis of every activation that has one.
    pub fn length_schedule(&self) -> Result<Vec<usize>> {
        Ok(self
            .shape_trace()?
            .into_iter()
            .filter(|s| s.len() == 2)
            .map(|s| s[0])
            .collect())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::param_shapes)
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum()
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let layers: Vec<String> = self.layers.iter().map(Layer::to_string).collect();
        let skips: Vec<String> = self.skips.iter().map(|(a, b)| format!("{a}>{b}")).collect();
        write!(
            f,
            "{};{};{};{};{}",
            self.role.as_str(),
            self.model_dim,
            join_dims(&self.input_shape),
            layers.join(","),
            skips.join(",")
        )
    }
}

impl FromStr for NetworkSpec {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(';').collect();
        if parts.len() != 5 {
            return Err(ModelError::Parse(format!("network spec `{s}` needs 5 fields")));
        }
        let model_dim = parts[1]
            .parse()
            .map_err(|_| ModelError::Parse(format!("bad model_dim `{}`", parts[1])))?;
        let layers = parts[3]
            .split(',')
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Layer>>>()?;
        let skips = parts[4]
            .split(',')
            .filter(|l| !l.is_empty())
            .map(|p| {
                let (a, b) = p
                    .split_once('>')
                    .ok_or_else(|| ModelError::Parse(format!("bad skip `{p}`")))?;
                let a = a.parse().map_err(|_| ModelError::Parse(format!("bad skip `{p}`")))?;
                let b = b.parse().map_err(|_| ModelError::Parse(format!("bad skip `{p}`")))?;
                Ok((a, b))
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = NetworkSpec {
            role: parts[0].parse()?,
            model_dim,
            input_shape: parse_dims(parts[2])?,
            layers,
            skips,
        };
        spec.validate()?;
        Ok(spec)
    }
}
