use super::{AudioClip, AudioError, Result, CLIP_LEN};

/// Framing and threshold for energy-based silence trimming.
#[derive(Clone, Debug, PartialEq)]
pub struct TrimConfig {
    pub frame_length: usize,
    pub hop: usize,
    /// Fraction of the clip's loudest frame energy that marks speech.
    pub threshold_fraction: f64,
    pub tail_trim: bool,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            frame_length: 512,
            hop: 256,
            threshold_fraction: 0.05,
            tail_trim: true,
        }
    }
}

impl TrimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_length {
            return Err(AudioError::Param(format!(
                "need 0 < hop <= frame_length, got hop {} frame {}",
                self.hop, self.frame_length
            )));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction <= 1.0) {
            return Err(AudioError::Param(format!(
                "threshold_fraction {} outside (0, 1]",
                self.threshold_fraction
            )));
        }
        Ok(())
    }
}

/// Mean squared amplitude of each frame. Frame `f` starts at `f * hop`; the
/// final partial frames are zero padded, giving `ceil(len / hop)` frames.
pub fn short_term_energy(clip: &AudioClip, cfg: &TrimConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if clip.is_empty() {
        return Err(AudioError::Param("empty clip".into()));
    }
    let n = clip.len();
    Ok((0..n.div_ceil(cfg.hop))
        .map(|f| {
            let start = f * cfg.hop;
            let end = (start + cfg.frame_length).min(n);
            let sum: f64 = clip.samples[start..end]
                .iter()
                .map(|&x| (x as f64) * (x as f64))
                .sum();
            sum / cfg.frame_length as f64
        })
        .collect())
}

/// Drops the leading (and, with `tail_trim`, trailing) frames whose energy
/// stays below `threshold_fraction` of the loudest frame.
pub fn trim_onset(clip: &AudioClip, cfg: &TrimConfig) -> Result<AudioClip> {
    let energy = short_term_energy(clip, cfg)?;
    let peak = energy.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(AudioError::NoSpeech);
    }
    let threshold = cfg.threshold_fraction * peak;
    let first = energy.iter().position(|&e| e >= threshold).unwrap_or(0);
    let start = first * cfg.hop;
    let end = if cfg.tail_trim {
        let last = energy.iter().rposition(|&e| e >= threshold).unwrap_or(first);
        (last * cfg.hop + cfg.frame_length).min(clip.len())
    } else {
        clip.len()
    };
    Ok(AudioClip {
        samples: clip.samples[start..end].to_vec(),
        sample_rate: clip.sample_rate,
        label: clip.label.clone(),
    })
}

/// Truncates or right-pads with zeros to exactly `n` samples.
pub fn fit_length(clip: &AudioClip, n: usize) -> AudioClip {
    let mut samples = clip.samples.clone();
    samples.resize(n, 0.0);
    AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        label: clip.label.clone(),
    }
}

/// Trims silence (keeping the original on "no speech") and fits to the
/// canonical training length.
pub fn preprocess(clip: &AudioClip, cfg: &TrimConfig) -> Result<AudioClip> {
    let trimmed = match trim_onset(clip, cfg) {
        Ok(t) => t,
        Err(AudioError::NoSpeech) => clip.clone(),
        Err(e) => return Err(e),
    };
    Ok(fit_length(&trimmed, CLIP_LEN))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(samples: Vec<f32>) -> AudioClip {
        AudioClip::new(samples, 16_000)
    }

    #[test]
    fn constant_and_silent_energy() {
        let cfg = TrimConfig::default();
        let e = short_term_energy(&clip(vec![1.0; 2048]), &cfg).unwrap();
        assert_eq!(e.len(), 8);
        assert!(e[..7].iter().all(|&v| v == 1.0));
        let e = short_term_energy(&clip(vec![0.0; 1000]), &cfg).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
        assert!(short_term_energy(&clip(vec![]), &cfg).is_err());
    }

    #[test]
    fn invalid_config() {
        let cfg = TrimConfig {
            hop: 0,
            ..TrimConfig::default()
        };
        assert!(matches!(
            short_term_energy(&clip(vec![1.0]), &cfg),
            Err(AudioError::Param(_))
        ));
        let cfg = TrimConfig {
            hop: 600,
            ..TrimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn all_zero_clip_has_no_speech() {
        let err = trim_onset(&clip(vec![0.0; 4000]), &TrimConfig::default()).unwrap_err();
        assert!(matches!(err, AudioError::NoSpeech));
    }

    #[test]
    fn speech_at_start_keeps_head() {
        let samples: Vec<f32> = (0..8000).map(|i| (i as f32 * 0.05).sin() * 0.8).collect();
        let out = trim_onset(&clip(samples.clone()), &TrimConfig::default()).unwrap();
        assert_eq!(out.samples[..100], samples[..100]);
    }

    #[test]
    fn unit_threshold_keeps_loudest_frame_span() {
        let mut samples = vec![0.01f32; 4096];
        for s in &mut samples[1024..1536] {
            *s = 1.0;
        }
        let cfg = TrimConfig {
            threshold_fraction: 1.0,
            ..TrimConfig::default()
        };
        let out = trim_onset(&clip(samples), &cfg).unwrap();
        assert_eq!(out.len(), 512);
        assert!(out.samples.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn tail_trim_flag() {
        let mut samples = vec![0.0f32; 8192];
        for s in &mut samples[2048..4096] {
            *s = 0.5;
        }
        let on = trim_onset(&clip(samples.clone()), &TrimConfig::default()).unwrap();
        let off = trim_onset(
            &clip(samples),
            &TrimConfig {
                tail_trim: false,
                ..TrimConfig::default()
            },
        )
        .unwrap();
        assert!(on.len() < off.len());
        assert_eq!(off.len(), 8192 - 1792);
    }

    #[test]
    fn fit_length_cases() {
        let short = fit_length(&clip(vec![0.5; 16_000]), 16_384);
        assert_eq!(short.len(), 16_384);
        assert!(short.samples[16_000..].iter().all(|&s| s == 0.0));
        let long: Vec<f32> = (0..20_000).map(|i| i as f32 / 20_000.0).collect();
        let cut = fit_length(&clip(long.clone()), 16_384);
        assert_eq!(cut.samples[..], long[..16_384]);
        let exact = clip(vec![0.25; 16_384]);
        assert_eq!(fit_length(&exact, 16_384), exact);
    }
}
