use std::fmt::Write as _;

use crate::models::NoiseRange;

use super::adam::AdamHyper;

/// A config file problem, located by line and key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: `{field}`: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

/// Hyperparameters of a progressive run. Defaults are the desk-scale
/// settings; [`TrainConfig::canonical`] gives the full-size schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda_gp: f64,
    pub n_critic: usize,
    pub adam: AdamHyper,
    pub batch_size: usize,
    pub stage1_iters: u64,
    pub stage2_iters: u64,
    pub model_dim: usize,
    pub shuffle_n: usize,
    pub noise_range: NoiseRange,
    pub seed: u64,
    /// Weight of an optional `mean((G(c) - c)^2)` term on the refinement
    /// generator. Zero keeps stage two purely adversarial.
    pub identity_weight: f64,
    /// Iterations between periodic checkpoints; zero disables them.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_gp: 10.0,
            n_critic: 5,
            adam: AdamHyper::default(),
            batch_size: 8,
            stage1_iters: 2_000,
            stage2_iters: 500,
            model_dim: 1,
            shuffle_n: crate::models::DEFAULT_SHUFFLE,
            noise_range: NoiseRange::UnitSigned,
            seed: 0,
            identity_weight: 0.0,
            checkpoint_every: 500,
        }
    }
}

const KEYS: &[&str] = &[
    "lambda_gp",
    "n_critic",
    "adam_alpha",
    "adam_beta1",
    "adam_beta2",
    "batch_size",
    "stage1_iters",
    "stage2_iters",
    "model_dim",
    "shuffle_n",
    "noise_range",
    "seed",
    "identity_weight",
    "checkpoint_every",
];

impl TrainConfig {
    pub fn canonical() -> Self {
        Self {
            batch_size: 64,
            stage1_iters: 140_000,
            stage2_iters: 20_000,
            model_dim: 64,
            checkpoint_every: 5_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, message: &str| ConfigError {
            line: 0,
            field: field.into(),
            message: message.into(),
        };
        if !(self.lambda_gp >= 0.0) {
            return Err(bad("lambda_gp", "must be >= 0"));
        }
        if self.n_critic < 1 {
            return Err(bad("n_critic", "must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(bad("batch_size", "must be >= 2"));
        }
        if self.model_dim < 1 {
            return Err(bad("model_dim", "must be >= 1"));
        }
        if !(self.adam.alpha > 0.0) {
            return Err(bad("adam_alpha", "must be > 0"));
        }
        for (k, v) in [("adam_beta1", self.adam.beta1), ("adam_beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(bad(k, "must be in [0, 1)"));
            }
        }
        if !(self.identity_weight >= 0.0) {
            return Err(bad("identity_weight", "must be >= 0"));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<V: std::str::FromStr>(v: &str) -> Result<V, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        match key {
            "lambda_gp" => self.lambda_gp = num(value)?,
            "n_critic" => self.n_critic = num(value)?,
            "adam_alpha" => self.adam.alpha = num(value)?,
            "adam_beta1" => self.adam.beta1 = num(value)?,
            "adam_beta2" => self.adam.beta2 = num(value)?,
            "batch_size" => self.batch_size = num(value)?,
            "stage1_iters" => self.stage1_iters = num(value)?,
            "stage2_iters" => self.stage2_iters = num(value)?,
            "model_dim" => self.model_dim = num(value)?,
            "shuffle_n" => self.shuffle_n = num(value)?,
            "noise_range" => {
                self.noise_range = value.parse().map_err(|e: crate::models::ModelError| e.to_string())?
            }
            "seed" => self.seed = num(value)?,
            "identity_weight" => self.identity_weight = num(value)?,
            "checkpoint_every" => self.checkpoint_every = num(value)?,
            _ => return Err(format!("unknown key; expected one of {}", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut last_line = KeyLines::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
                line: i + 1,
                field: line.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            cfg.set(key, value.trim()).map_err(|message| ConfigError {
                line: i + 1,
                field: key.to_string(),
                message,
            })?;
            last_line.record(key, i + 1);
        }
        cfg.validate().map_err(|mut e| {
            e.line = last_line.get(&e.field);
            e
        })?;
        Ok(cfg)
    }

    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let rows: [(&str, String); 14] = [
            ("lambda_gp", self.lambda_gp.to_string()),
            ("n_critic", self.n_critic.to_string()),
            ("adam_alpha", self.adam.alpha.to_string()),
            ("adam_beta1", self.adam.beta1.to_string()),
            ("adam_beta2", self.adam.beta2.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("stage1_iters", self.stage1_iters.to_string()),
            ("stage2_iters", self.stage2_iters.to_string()),
            ("model_dim", self.model_dim.to_string()),
            ("shuffle_n", self.shuffle_n.to_string()),
            ("noise_range", self.noise_range.as_str().to_string()),
            ("seed", self.seed.to_string()),
            ("identity_weight", self.identity_weight.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[derive(Default)]
struct KeyLines(Vec<(String, usize)>);

impl KeyLines {
    fn record(&mut self, key: &str, line: usize) {
        self.0.push((key.to_string(), line));
    }

    fn get(&self, key: &str) -> usize {
        self.0
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map_or(0, |(_, l)| *l)
    }
}
