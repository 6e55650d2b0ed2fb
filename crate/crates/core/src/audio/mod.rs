//! WAV I/O, short-term-energy silence trimming, length fitting and dataset
//! ingestion.

mod dataset;
mod fixtures;
mod trim;
mod wav;

pub use dataset::{ingest_dataset, load_dataset, read_labelled_wavs, DatasetEntry, DatasetSummary};
pub use fixtures::{fixture_corpus, synth_fixture, FixtureKind};
pub use trim::{fit_length, preprocess, short_term_energy, trim_onset, TrimConfig};
pub use wav::{read_wav, write_wav};

/// Canonical sample rate of the speech corpus.
pub const SAMPLE_RATE: u32 = 16_000;
/// Number of samples every training clip is fitted to.
pub const CLIP_LEN: usize = 16_384;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("WAV format error in `{field}`: {detail}")]
    Format { field: &'static str, detail: String },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("no speech detected")]
    NoSpeech,
    #[error("empty dataset under {0}")]
    EmptyDataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// Mono waveform with samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub label: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
