use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AudioClip, SAMPLE_RATE};

/// Synthetic one-second stand-ins for spoken commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixtureKind {
    Tone,
    Chirp,
    /// Zeros up to `onset`, then a tone whose first sample is nonzero.
    SilenceThenTone { onset: usize },
}

impl FixtureKind {
    pub fn label(self) -> &'static str {
        match self {
            FixtureKind::Tone => "tone",
            FixtureKind::Chirp => "chirp",
            FixtureKind::SilenceThenTone { .. } => "onset",
        }
    }
}

/// One second at 16 kHz, deterministic for a given `seed`, peak at most 0.9.
pub fn synth_fixture(kind: FixtureKind, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = SAMPLE_RATE as usize;
    let sr = SAMPLE_RATE as f64;
    let amp = rng.random_range(0.4..0.9);
    let samples = match kind {
        FixtureKind::Tone => {
            let freq = rng.random_range(150.0..1200.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            (0..n)
                .map(|i| (amp * (2.0 * PI * freq * i as f64 / sr + phase).sin()) as f32)
                .collect()
        }
        FixtureKind::Chirp => {
            let f0 = rng.random_range(100.0..400.0);
            let f1 = rng.random_range(1000.0..3000.0);
            let dur = n as f64 / sr;
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    let phase = 2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * dur));
                    (amp * phase.sin()) as f32
                })
                .collect()
        }
        FixtureKind::SilenceThenTone { onset } => {
            let freq = rng.random_range(150.0..1200.0);
            let phase = rng.random_range(0.25..PI - 0.25);
            (0..n)
                .map(|i| {
                    if i < onset {
                        0.0
                    } else {
                        let t = (i - onset) as f64 / sr;
                        (amp * (2.0 * PI * freq * t + phase).sin()) as f32
                    }
                })
                .collect()
        }
    };
    AudioClip::new(samples, SAMPLE_RATE).with_label(kind.label())
}

/// `count` labelled fixtures cycling through tones, chirps and delayed tones.
pub fn fixture_corpus(count: usize, seed: u64) -> Vec<AudioClip> {
    (0..count)
        .map(|i| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let kind = match i % 3 {
                0 => FixtureKind::Tone,
                1 => FixtureKind::Chirp,
                _ => FixtureKind::SilenceThenTone {
                    onset: 1000 + (i * 397) % 6000,
                },
            };
            synth_fixture(kind, s)
        })
        .collect()
}
