use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::CLIP_LEN;
use crate::models::{
    apply, build_autoencoder, build_discriminator, build_generator, forward, sample_noise,
    ModelParams, ParamVars, Pipeline, Stage,
};
use crate::tensor::{Gradients, Tape, Tensor};
use crate::Scalar;

use super::adam::{adam_step, AdamState};
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::loss::{critic_loss_wgan_gp, generator_loss_wgan, NetworkCritic};
use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageKind {
    /// Noise-driven generator against real clips.
    WaveGan,
    /// Skip-connected autoencoder refining conditioning clips.
    AudioToAudio,
}

impl StageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::WaveGan => "wavegan",
            StageKind::AudioToAudio => "audio_to_audio",
        }
    }

    fn stream(self) -> u64 {
        match self {
            StageKind::WaveGan => 1,
            StageKind::AudioToAudio => 2,
        }
    }
}

impl std::str::FromStr for StageKind {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s {
            "wavegan" => Ok(StageKind::WaveGan),
            "audio_to_audio" => Ok(StageKind::AudioToAudio),
            _ => Err(TrainError::Param(format!("unknown stage `{s}`"))),
        }
    }
}

/// What the stage generator consumes.
#[derive(Clone, Copy, Debug)]
pub enum InputSource<'a, T> {
    Noise,
    /// Outputs of a frozen pipeline driven by fresh noise.
    Pipeline(&'a Pipeline<T>),
    /// Rows of a `[N, 16384, 1]` clip tensor.
    Clips(&'a Tensor<T>),
}

pub const METRICS_HEADER: &str =
    "iteration,critic_loss,wasserstein_term,penalty_term,generator_loss";

/// Losses of the last critic update and the generator update of one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub stage: StageKind,
    pub iteration: u64,
    pub critic_loss: f64,
    pub wasserstein_term: f64,
    pub penalty_term: f64,
    pub generator_loss: f64,
}

impl MetricRecord {
    /// One row under [`METRICS_HEADER`], values in shortest round-trip form.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration,
            self.critic_loss,
            self.wasserstein_term,
            self.penalty_term,
            self.generator_loss
        )
    }
}

pub trait TrainObserver<T> {
    fn on_metrics(&mut self, _record: &MetricRecord) -> Result<(), TrainError> {
        Ok(())
    }

    /// Called every `checkpoint_every` iterations.
    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint<T>) -> Result<(), TrainError> {
        Ok(())
    }

    /// Called once a stage reaches its target, with its final state.
    fn on_stage_end(&mut self, _checkpoint: &Checkpoint<T>) -> Result<(), TrainError> {
        Ok(())
    }
}

pub struct NoObserver;

impl<T> TrainObserver<T> for NoObserver {}

/// Collects every metric record in memory.
#[derive(Default, Debug, Clone)]
pub struct MetricLog(pub Vec<MetricRecord>);

impl<T> TrainObserver<T> for MetricLog {
    fn on_metrics(&mut self, record: &MetricRecord) -> Result<(), TrainError> {
        self.0.push(record.clone());
        Ok(())
    }
}

/// Drives one adversarial stage over a `[N, 16384, 1]` tensor of real clips.
pub struct StageTrainer<'a, T> {
    state: Checkpoint<T>,
    data: &'a Tensor<T>,
    source: InputSource<'a, T>,
}

fn check_clips<T: Scalar>(t: &Tensor<T>) -> Result<(), TrainError> {
    match t.shape() {
        [0, ..] => Err(TrainError::EmptyData),
        [_, len, 1] if *len == CLIP_LEN => Ok(()),
        other => Err(TrainError::Param(format!(
            "clip tensor must be [N, {CLIP_LEN}, 1], got {other:?}"
        ))),
    }
}

fn check_source<T: Scalar>(kind: StageKind, source: &InputSource<'_, T>) -> Result<(), TrainError> {
    match (kind, source) {
        (StageKind::WaveGan, InputSource::Noise) => Ok(()),
        (StageKind::AudioToAudio, InputSource::Pipeline(_)) => Ok(()),
        (StageKind::AudioToAudio, InputSource::Clips(c)) => check_clips(c),
        (k, _) => Err(TrainError::Param(format!(
            "input source does not fit a {} stage",
            k.as_str()
        ))),
    }
}

/// Fields that may change between a checkpoint and its continuation.
fn comparable(cfg: &TrainConfig) -> TrainConfig {
    TrainConfig {
        stage1_iters: 0,
        stage2_iters: 0,
        checkpoint_every: 0,
        ..cfg.clone()
    }
}

fn rows<T: Scalar>(src: &Tensor<T>, index: &[usize]) -> Tensor<T> {
    let row = src.numel() / src.shape()[0];
    let mut shape = src.shape().to_vec();
    shape[0] = index.len();
    let mut data = Vec::with_capacity(index.len() * row);
    for &i in index {
        data.extend_from_slice(&src.data()[i * row..(i + 1) * row]);
    }
    Tensor::new(&shape, data).expect("row gather preserves size")
}

fn named_grads<T: Scalar>(vars: &ParamVars, grads: &Gradients<T>, tape: &Tape<T>) -> BTreeMap<String, Tensor<T>> {
    vars.iter()
        .map(|(name, &v)| {
            let g = grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(&tape.shape(v)));
            (name.clone(), g)
        })
        .collect()
}

impl<'a, T: Scalar> StageTrainer<'a, T> {
    /// Fresh stage: generator then critic drawn from the stage's seeded stream.
    pub fn new(
        kind: StageKind,
        cfg: &TrainConfig,
        data: &'a Tensor<T>,
        source: InputSource<'a, T>,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        check_clips(data)?;
        check_source(kind, &source)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(kind.stream());
        let gen_spec = match kind {
            StageKind::WaveGan => build_generator(cfg.model_dim)?,
            StageKind::AudioToAudio => build_autoencoder(cfg.model_dim)?,
        };
        let critic_spec = build_discriminator(cfg.model_dim, cfg.shuffle_n)?;
        let gen_params = ModelParams::init(&gen_spec, &mut rng);
        let critic_params = ModelParams::init(&critic_spec, &mut rng);
        let frozen = match source {
            InputSource::Pipeline(p) if p.stages().len() == 1 => Some(p.stages()[0].clone()),
            _ => None,
        };
        let state = Checkpoint {
            kind,
            iteration: 0,
            critic_steps: 0,
            generator_steps: 0,
            config: cfg.clone(),
            generator_adam: AdamState::new(&gen_params),
            critic_adam: AdamState::new(&critic_params),
            generator: Stage {
                spec: gen_spec,
                params: gen_params,
            },
            critic: Stage {
                spec: critic_spec,
                params: critic_params,
            },
            frozen,
            rng,
        };
        Ok(Self { state, data, source })
    }

    /// Continues from `checkpoint`. Only iteration targets and the
    /// checkpoint interval of `cfg` may differ from the stored config.
    pub fn resume(
        checkpoint: Checkpoint<T>,
        cfg: &TrainConfig,
        data: &'a Tensor<T>,
        source: InputSource<'a, T>,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        check_clips(data)?;
        check_source(checkpoint.kind, &source)?;
        if comparable(cfg) != comparable(&checkpoint.config) {
            return Err(TrainError::Param(
                "config differs from the checkpoint beyond iteration counts".into(),
            ));
        }
        checkpoint.generator.params.check(&checkpoint.generator.spec)?;
        checkpoint.critic.params.check(&checkpoint.critic.spec)?;
        let mut state = checkpoint;
        state.config = cfg.clone();
        Ok(Self { state, data, source })
    }

    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    /// Iteration count this stage runs to under its config.
    pub fn target(&self) -> u64 {
        match self.state.kind {
            StageKind::WaveGan => self.state.config.stage1_iters,
            StageKind::AudioToAudio => self.state.config.stage2_iters,
        }
    }

    pub fn checkpoint(&self) -> &Checkpoint<T> {
        &self.state
    }

    pub fn into_checkpoint(self) -> Checkpoint<T> {
        self.state
    }

    fn generator_input(&mut self, batch: usize) -> Result<Tensor<T>, TrainError> {
        let rng = &mut self.state.rng;
        Ok(match self.source {
            InputSource::Noise => sample_noise(batch, self.state.config.noise_range, rng),
            InputSource::Pipeline(p) => {
                let z = sample_noise(batch, self.state.config.noise_range, rng);
                p.run(&z)?
            }
            InputSource::Clips(c) => {
                let n = c.shape()[0];
                let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
                rows(c, &idx)
            }
        })
    }

    fn real_batch(&mut self, batch: usize) -> Tensor<T> {
        let n = self.data.shape()[0];
        let idx: Vec<usize> = (0..batch)
            .map(|_| self.state.rng.random_range(0..n))
            .collect();
        rows(self.data, &idx)
    }

    fn non_finite(&self, what: &str) -> TrainError {
        TrainError::NonFinite {
            iteration: self.state.iteration + 1,
            what: what.to_string(),
            checkpoint: self.state.encode(),
        }
    }

    /// One critic update; returns (total, wasserstein, penalty).
    fn critic_step(&mut self) -> Result<(f64, f64, f64), TrainError> {
        let batch = self.state.config.batch_size;
        let input = self.generator_input(batch)?;
        let gen = &self.state.generator;
        let fake = apply(&gen.spec, &gen.params, &input, &mut self.state.rng)?;
        let real = self.real_batch(batch);

        let tape = Tape::new();
        let vars = self.state.critic.params.register(&tape, true);
        let mut critic = NetworkCritic {
            spec: &self.state.critic.spec,
            params: &vars,
        };
        let loss = critic_loss_wgan_gp(
            &tape,
            &mut critic,
            &fake,
            &real,
            self.state.config.lambda_gp,
            &mut self.state.rng,
        )?;
        let values = (
            tape.value(loss.total).item().as_f64(),
            tape.value(loss.wasserstein).item().as_f64(),
            tape.value(loss.penalty).item().as_f64(),
        );
        if !(values.0.is_finite() && values.1.is_finite() && values.2.is_finite()) {
            return Err(self.non_finite("critic loss"));
        }
        let grads = named_grads(&vars, &tape.backward(loss.total)?, &tape);
        if grads.values().any(|g| !g.all_finite()) {
            return Err(self.non_finite("critic gradient"));
        }
        adam_step(
            &mut self.state.critic.params,
            &grads,
            &mut self.state.critic_adam,
            &self.state.config.adam,
        )?;
        self.state.critic_steps += 1;
        Ok(values)
    }

    fn generator_step(&mut self) -> Result<f64, TrainError> {
        let batch = self.state.config.batch_size;
        let input = self.generator_input(batch)?;
        let tape = Tape::new();
        let gvars = self.state.generator.params.register(&tape, true);
        let cvars = self.state.critic.params.register(&tape, false);
        let x = tape.constant(input);
        let fake = forward(&tape, &self.state.generator.spec, &gvars, x, &mut self.state.rng)?;
        let mut critic = NetworkCritic {
            spec: &self.state.critic.spec,
            params: &cvars,
        };
        let mut loss = generator_loss_wgan(&tape, &mut critic, fake, &mut self.state.rng)?;
        let w = self.state.config.identity_weight;
        if w > 0.0 && self.state.kind == StageKind::AudioToAudio {
            let diff = tape.sub(fake, x)?;
            let rec = tape.mean(tape.square(diff))?;
            loss = tape.add(loss, tape.scale(rec, T::of(w)))?;
        }
        let value = tape.value(loss).item().as_f64();
        if !value.is_finite() {
            return Err(self.non_finite("generator loss"));
        }
        let grads = named_grads(&gvars, &tape.backward(loss)?, &tape);
        if grads.values().any(|g| !g.all_finite()) {
            return Err(self.non_finite("generator gradient"));
        }
        adam_step(
            &mut self.state.generator.params,
            &grads,
            &mut self.state.generator_adam,
            &self.state.config.adam,
        )?;
        self.state.generator_steps += 1;
        Ok(value)
    }

    /// `n_critic` critic updates followed by one generator update.
    pub fn step(&mut self) -> Result<MetricRecord, TrainError> {
        let mut last = (0.0, 0.0, 0.0);
        for _ in 0..self.state.config.n_critic {
            last = self.critic_step()?;
        }
        let generator_loss = self.generator_step()?;
        self.state.iteration += 1;
        Ok(MetricRecord {
            stage: self.state.kind,
            iteration: self.state.iteration,
            critic_loss: last.0,
            wasserstein_term: last.1,
            penalty_term: last.2,
            generator_loss,
        })
    }

    /// Steps until `iteration` is reached, reporting to `observer`.
    pub fn run_until(
        &mut self,
        iteration: u64,
        observer: &mut impl TrainObserver<T>,
    ) -> Result<(), TrainError> {
        while self.state.iteration < iteration {
            let record = self.step()?;
            observer.on_metrics(&record)?;
            let every = self.state.config.checkpoint_every;
            if every > 0 && self.state.iteration % every == 0 {
                observer.on_checkpoint(&self.state)?;
            }
        }
        Ok(())
    }
}

/// Runs one stage to its configured iteration count, fresh or from `init`.
pub fn train_stage<T: Scalar>(
    kind: StageKind,
    data: &Tensor<T>,
    cfg: &TrainConfig,
    init: Option<Checkpoint<T>>,
    source: InputSource<'_, T>,
    observer: &mut impl TrainObserver<T>,
) -> Result<Checkpoint<T>, TrainError> {
    let mut trainer = match init {
        Some(ckpt) => {
            if ckpt.kind != kind {
                return Err(TrainError::Param(format!(
                    "checkpoint is a {} stage, asked for {}",
                    ckpt.kind.as_str(),
                    kind.as_str()
                )));
            }
            StageTrainer::resume(ckpt, cfg, data, source)?
        }
        None => StageTrainer::new(kind, cfg, data, source)?,
    };
    let target = trainer.target();
    trainer.run_until(target, observer)?;
    observer.on_stage_end(trainer.checkpoint())?;
    Ok(trainer.into_checkpoint())
}
