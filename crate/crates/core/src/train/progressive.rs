use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioClip, CLIP_LEN, SAMPLE_RATE};
use crate::models::{chain, sample_noise, NoiseRange, Pipeline};
use crate::tensor::Tensor;
use crate::Scalar;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::trainer::{train_stage, InputSource, StageKind, TrainObserver};
use super::TrainError;

/// Where a progressive run picks up.
#[derive(Clone, Debug, Default)]
pub enum Resume<T> {
    #[default]
    Fresh,
    /// Mid stage one.
    Stage1(Checkpoint<T>),
    /// Stage one finished, stage two mid-way.
    Stage2 {
        stage1: Checkpoint<T>,
        stage2: Checkpoint<T>,
    },
}

/// Stacks canonical-length clips into a `[N, 16384, 1]` training tensor.
pub fn clips_tensor<T: Scalar>(clips: &[AudioClip]) -> Result<Tensor<T>, TrainError> {
    if clips.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut data = Vec::with_capacity(clips.len() * CLIP_LEN);
    for (i, c) in clips.iter().enumerate() {
        if c.len() != CLIP_LEN || c.sample_rate != SAMPLE_RATE {
            return Err(TrainError::Param(format!(
                "clip {i} has {} samples at {} Hz, need {CLIP_LEN} at {SAMPLE_RATE} Hz",
                c.len(),
                c.sample_rate
            )));
        }
        data.extend(c.samples.iter().map(|&s| T::of(s as f64)));
    }
    Ok(Tensor::new(&[clips.len(), CLIP_LEN, 1], data)?)
}

/// Trains the noise-driven stage, freezes its generator, then trains the
/// audio-to-audio stage on that generator's outputs.
pub fn train_progressive<T: Scalar>(
    cfg: &TrainConfig,
    data: &Tensor<T>,
    resume: Resume<T>,
    observer: &mut impl TrainObserver<T>,
) -> Result<(Checkpoint<T>, Checkpoint<T>), TrainError> {
    let (stage1, stage2_init) = match resume {
        Resume::Fresh => (
            train_stage(StageKind::WaveGan, data, cfg, None, InputSource::Noise, observer)?,
            None,
        ),
        Resume::Stage1(ckpt) => (
            train_stage(StageKind::WaveGan, data, cfg, Some(ckpt), InputSource::Noise, observer)?,
            None,
        ),
        Resume::Stage2 { stage1, stage2 } => {
            let frozen_digest = stage2.frozen.as_ref().map(|s| s.params.digest());
            if frozen_digest != Some(stage1.generator.params.digest()) {
                return Err(TrainError::Param(
                    "stage-two checkpoint was not trained on this stage-one generator".into(),
                ));
            }
            (stage1, Some(stage2))
        }
    };
    let pipeline = chain(vec![stage1.generator.clone()])?;
    let stage2 = train_stage(
        StageKind::AudioToAudio,
        data,
        cfg,
        stage2_init,
        InputSource::Pipeline(&pipeline),
        observer,
    )?;
    Ok((stage1, stage2))
}

/// `n` clips from noise drawn with `seed`, in order.
pub fn generate<T: Scalar>(
    pipeline: &Pipeline<T>,
    n: usize,
    seed: u64,
    noise: NoiseRange,
) -> Result<Vec<AudioClip>, TrainError> {
    const CHUNK: usize = 8;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Tensor<T> = sample_noise(n, noise, &mut rng);
    let mut clips = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let out = pipeline.run(&z.slice_rows(start, end)?)?;
        for row in out.data().chunks_exact(CLIP_LEN) {
            let samples = row.iter().map(|v| v.as_f32().clamp(-1.0, 1.0)).collect();
            clips.push(AudioClip::new(samples, SAMPLE_RATE));
        }
        start = end;
    }
    Ok(clips)
}
