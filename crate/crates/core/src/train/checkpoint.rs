use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

use crate::models::{chain, ModelParams, NetworkSpec, Pipeline, Stage};
use crate::tensor::Tensor;
use crate::Scalar;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::trainer::StageKind;
use super::TrainError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PWGANCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue one stage bit-identically.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub kind: StageKind,
    pub iteration: u64,
    pub critic_steps: u64,
    pub generator_steps: u64,
    pub config: TrainConfig,
    pub generator: Stage<T>,
    pub critic: Stage<T>,
    pub generator_adam: AdamState<T>,
    pub critic_adam: AdamState<T>,
    /// The stage-one generator feeding an audio-to-audio stage.
    pub frozen: Option<Stage<T>>,
    pub rng: ChaCha8Rng,
}

fn corrupt(entry: impl Into<String>, detail: impl Into<String>) -> TrainError {
    TrainError::Checkpoint {
        entry: entry.into(),
        detail: detail.into(),
    }
}

impl<T: Scalar> Checkpoint<T> {
    /// The generation chain this checkpoint defines. An audio-to-audio
    /// stage that has not run a single iteration is left out.
    pub fn pipeline(&self) -> Result<Pipeline<T>, TrainError> {
        let stages = match (self.kind, &self.frozen) {
            (StageKind::WaveGan, _) => vec![self.generator.clone()],
            (StageKind::AudioToAudio, Some(frozen)) if self.iteration == 0 => vec![frozen.clone()],
            (StageKind::AudioToAudio, Some(frozen)) => {
                vec![frozen.clone(), self.generator.clone()]
            }
            (StageKind::AudioToAudio, None) => {
                return Err(TrainError::Param(
                    "audio-to-audio checkpoint has no noise-driven stage".into(),
                ))
            }
        };
        Ok(chain(stages)?)
    }

    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut groups = vec![
            ("generator", &self.generator.params.tensors),
            ("critic", &self.critic.params.tensors),
            ("generator_adam/m", &self.generator_adam.first),
            ("generator_adam/v", &self.generator_adam.second),
            ("critic_adam/m", &self.critic_adam.first),
            ("critic_adam/v", &self.critic_adam.second),
        ];
        if let Some(frozen) = &self.frozen {
            groups.push(("frozen", &frozen.params.tensors));
        }
        groups
            .into_iter()
            .flat_map(|(prefix, map)| map.iter().map(move |(k, v)| (format!("{prefix}/{k}"), v)))
            .collect()
    }

    fn meta(&self) -> String {
        let mut m = String::new();
        let seed: String = self.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        let rows = [
            ("stage", self.kind.as_str().to_string()),
            ("dtype", T::DTYPE.to_string()),
            ("iteration", self.iteration.to_string()),
            ("critic_steps", self.critic_steps.to_string()),
            ("generator_steps", self.generator_steps.to_string()),
            ("generator_adam_step", self.generator_adam.step.to_string()),
            ("critic_adam_step", self.critic_adam.step.to_string()),
            ("generator_spec", self.generator.spec.to_string()),
            ("critic_spec", self.critic.spec.to_string()),
            ("rng_seed", seed),
            ("rng_stream", self.rng.get_stream().to_string()),
            ("rng_word_pos", self.rng.get_word_pos().to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(m, "{k} = {v}");
        }
        if let Some(frozen) = &self.frozen {
            let _ = writeln!(m, "frozen_spec = {}", frozen.spec);
        }
        for line in self.config.to_kv_text().lines() {
            let _ = writeln!(m, "config.{line}");
        }
        m
    }

    /// Byte-stable encoding: equal states give equal bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let meta = self.meta();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        let tensors = self.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(corrupt("magic", "not a checkpoint file"));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt("version", format!("unsupported version {version}")));
        }
        let meta_len = r.u32("meta")? as usize;
        let meta = std::str::from_utf8(r.take(meta_len, "meta")?)
            .map_err(|_| corrupt("meta", "not UTF-8"))?;
        let meta = Meta::parse(meta)?;
        if meta.get("dtype")? != T::DTYPE {
            return Err(corrupt(
                "dtype",
                format!("stored {} but loading as {}", meta.get("dtype")?, T::DTYPE),
            ));
        }

        let count = r.u32("entry count")?;
        let mut groups: BTreeMap<String, BTreeMap<String, Tensor<T>>> = BTreeMap::new();
        for i in 0..count {
            let label = format!("entry #{i}");
            let name_len = r.u16(&label)? as usize;
            let name = std::str::from_utf8(r.take(name_len, &label)?)
                .map_err(|_| corrupt(label.as_str(), "name is not UTF-8"))?
                .to_string();
            let rank = r.take(1, &name)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32(&name)? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * T::WIDTH, &name)?;
            let data: Vec<T> = raw.chunks_exact(T::WIDTH).map(T::read_le).collect();
            let tensor = Tensor::new(&shape, data).map_err(|e| corrupt(name.as_str(), e.to_string()))?;
            let (group, param) = name
                .rsplit_once('/')
                .ok_or_else(|| corrupt(name.as_str(), "name lacks a group prefix"))?;
            groups
                .entry(group.to_string())
                .or_default()
                .insert(param.to_string(), tensor);
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailer", format!("{} unexpected bytes", bytes.len() - r.pos)));
        }

        let mut take_group = |g: &str| groups.remove(g).unwrap_or_default();
        let stage = |spec_key: &str, group: BTreeMap<String, Tensor<T>>| -> Result<Stage<T>, TrainError> {
            let spec: NetworkSpec = meta
                .get(spec_key)?
                .parse()
                .map_err(|e: crate::models::ModelError| corrupt(spec_key, e.to_string()))?;
            let params = ModelParams { tensors: group };
            params.check(&spec).map_err(|e| corrupt(spec_key, e.to_string()))?;
            Ok(Stage { spec, params })
        };
        let generator = stage("generator_spec", take_group("generator"))?;
        let critic = stage("critic_spec", take_group("critic"))?;
        let frozen = if meta.has("frozen_spec") {
            Some(stage("frozen_spec", take_group("frozen"))?)
        } else {
            None
        };
        let adam = |step_key: &str, m: BTreeMap<String, Tensor<T>>, v: BTreeMap<String, Tensor<T>>, params: &ModelParams<T>| {
            for (k, p) in &params.tensors {
                for (which, map) in [("m", &m), ("v", &v)] {
                    match map.get(k) {
                        Some(t) if t.shape() == p.shape() => {}
                        _ => return Err(corrupt(format!("{step_key}/{which}/{k}"), "missing or misshapen moment")),
                    }
                }
            }
            Ok(AdamState {
                step: meta.num(step_key)?,
                first: m,
                second: v,
            })
        };
        let generator_adam = adam(
            "generator_adam_step",
            take_group("generator_adam/m"),
            take_group("generator_adam/v"),
            &generator.params,
        )?;
        let critic_adam = adam(
            "critic_adam_step",
            take_group("critic_adam/m"),
            take_group("critic_adam/v"),
            &critic.params,
        )?;
        if let Some(extra) = groups.keys().next() {
            return Err(corrupt(extra.as_str(), "unknown entry group"));
        }

        let config_text: String = meta
            .pairs
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| format!("{k} = {v}\n")))
            .collect();
        let config = TrainConfig::from_kv_text(&config_text)
            .map_err(|e| corrupt(format!("config.{}", e.field), e.message))?;

        let seed_hex = meta.get("rng_seed")?;
        if seed_hex.len() != 64 {
            return Err(corrupt("rng_seed", "expected 64 hex digits"));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16)
                .map_err(|_| corrupt("rng_seed", "expected 64 hex digits"))?;
        }
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
        rng.set_stream(meta.num("rng_stream")?);
        rng.set_word_pos(meta.num("rng_word_pos")?);

        Ok(Checkpoint {
            kind: meta.get("stage")?.parse()?,
            iteration: meta.num("iteration")?,
            critic_steps: meta.num("critic_steps")?,
            generator_steps: meta.num("generator_steps")?,
            config,
            generator,
            critic,
            generator_adam,
            critic_adam,
            frozen,
            rng,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TrainError> {
        Ok(std::fs::write(path, self.encode())?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TrainError> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, entry: &str) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(entry, "truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, entry: &str) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4, entry)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self, entry: &str) -> Result<u16, TrainError> {
        Ok(u16::from_le_bytes(self.take(2, entry)?.try_into().expect("2 bytes")))
    }
}

struct Meta {
    pairs: Vec<(String, String)>,
}

impl Meta {
    fn parse(text: &str) -> Result<Self, TrainError> {
        let pairs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once(" = ")
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| corrupt("meta", format!("bad line `{l}`")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { pairs })
    }

    fn has(&self, key: &str) -> bool {
        self.pairs.iter().any(|(k, _)| k == key)
    }

    fn get(&self, key: &str) -> Result<&str, TrainError> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| corrupt(key, "missing"))
    }

    fn num<N: std::str::FromStr>(&self, key: &str) -> Result<N, TrainError> {
        let v = self.get(key)?;
        v.parse().map_err(|_| corrupt(key, format!("cannot parse `{v}`")))
    }
}
