//! Listening-test statistics and signal diagnostics for generated clips.

mod fixture;
mod ratings;

pub use fixture::{moment_matched_scores, table1_fixture, TABLE1};
pub use ratings::{parse_rating_line, parse_ratings, ParsedRatings, RatingRecord, System};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::audio::AudioClip;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no ratings")]
    Empty,
    #[error("no ratings for system `{0}`")]
    MissingSystem(System),
    #[error("effect size undefined: pooled standard deviation is zero")]
    UndefinedEffect,
    #[error("score {0} outside 1..=7")]
    Score(i64),
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// Mean and sample standard deviation of one system's scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SystemStats {
    pub system: System,
    pub n: usize,
    pub mean: f64,
    /// `n - 1` denominator; zero for a single score.
    pub std_dev: f64,
}

impl SystemStats {
    pub fn new(system: System, n: usize, mean: f64, std_dev: f64) -> Self {
        Self {
            system,
            n,
            mean,
            std_dev,
        }
    }

    /// Two-pass statistics over real-valued scores.
    pub fn from_scores(system: System, scores: &[f64]) -> Result<Self, EvalError> {
        if scores.is_empty() {
            return Err(EvalError::MissingSystem(system));
        }
        let n = scores.len();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let std_dev = if n == 1 {
            0.0
        } else {
            let ss: f64 = scores.iter().map(|s| (s - mean) * (s - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        Ok(Self::new(system, n, mean, std_dev))
    }

    /// Exact statistics from integer sums, independent of record order.
    fn from_sums(system: System, n: u64, sum: u64, sum_sq: u64) -> Self {
        let mean = sum as f64 / n as f64;
        let std_dev = if n < 2 {
            0.0
        } else {
            // n * sum_sq - sum^2 is an exact non-negative integer
            let num = n * sum_sq - sum * sum;
            (num as f64 / (n * (n - 1)) as f64).sqrt()
        };
        Self::new(system, n as usize, mean, std_dev)
    }
}

/// Per-system statistics of every record present.
pub fn aggregate(ratings: &[RatingRecord]) -> Result<BTreeMap<System, SystemStats>, EvalError> {
    if ratings.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sums: BTreeMap<System, (u64, u64, u64)> = BTreeMap::new();
    for r in ratings {
        r.validate()?;
        let s = r.score as u64;
        let e = sums.entry(r.system).or_default();
        e.0 += 1;
        e.1 += s;
        e.2 += s * s;
    }
    Ok(sums
        .into_iter()
        .map(|(sys, (n, s, ss))| (sys, SystemStats::from_sums(sys, n, s, ss)))
        .collect())
}

/// `(b.mean - a.mean) / sqrt((a.sd^2 + b.sd^2) / 2)`, positive when `b`
/// scores higher.
pub fn cohens_d(a: &SystemStats, b: &SystemStats) -> Result<f64, EvalError> {
    let pooled = ((a.std_dev * a.std_dev + b.std_dev * b.std_dev) / 2.0).sqrt();
    if !(pooled > 0.0) {
        return Err(EvalError::UndefinedEffect);
    }
    Ok((b.mean - a.mean) / pooled)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectBand {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectBand {
    pub fn as_str(self) -> &'static str {
        match self {
            EffectBand::Negligible => "negligible",
            EffectBand::Small => "small",
            EffectBand::Medium => "medium",
            EffectBand::Large => "large",
        }
    }
}

impl std::fmt::Display for EffectBand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bands on `|d|`, each closed on the left: 0.2, 0.5, 0.8.
pub fn effect_band(d: f64) -> EffectBand {
    let m = d.abs();
    if m < 0.2 {
        EffectBand::Negligible
    } else if m < 0.5 {
        EffectBand::Small
    } else if m < 0.8 {
        EffectBand::Medium
    } else {
        EffectBand::Large
    }
}

/// Aggregate statistics of a two-system listening test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub baseline: SystemStats,
    pub proposed: SystemStats,
    pub cohens_d: f64,
    pub effect_band: EffectBand,
    pub records: usize,
    /// Lines rejected while reading the ratings file.
    pub skipped: usize,
}

impl EvaluationReport {
    pub fn from_records(ratings: &[RatingRecord], skipped: usize) -> Result<Self, EvalError> {
        let stats = aggregate(ratings)?;
        let get = |s: System| stats.get(&s).copied().ok_or(EvalError::MissingSystem(s));
        let baseline = get(System::Baseline)?;
        let proposed = get(System::Proposed)?;
        let d = cohens_d(&baseline, &proposed)?;
        Ok(Self {
            baseline,
            proposed,
            cohens_d: d,
            effect_band: effect_band(d),
            records: ratings.len(),
            skipped,
        })
    }

    /// Comma-separated export with one row per network, shaped like the
    /// published results table.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("network,mean_score,std_dev,cohens_d\n");
        for s in [&self.baseline, &self.proposed] {
            out.push_str(&format!(
                "{},{:.4},{:.4},{:.4}\n",
                s.system.display_name(),
                s.mean,
                s.std_dev,
                self.cohens_d
            ));
        }
        out
    }

    /// Multi-line human-readable summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in [&self.baseline, &self.proposed] {
            out.push_str(&format!(
                "{:<18} n={:<4} mean={:.4} std={:.4}\n",
                s.system.display_name(),
                s.n,
                s.mean,
                s.std_dev
            ));
        }
        out.push_str(&format!(
            "cohen's d = {:.4} ({})\nrecords = {}, skipped lines = {}\n",
            self.cohens_d, self.effect_band, self.records, self.skipped
        ));
        out
    }
}

/// Simple level statistics of one clip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClipDiagnostics {
    pub peak: f64,
    pub rms: f64,
    pub dc_offset: f64,
    /// Fraction of 512-sample frames (hop 256) with energy below `1e-4`.
    pub silence_ratio: f64,
}

pub const SILENCE_ENERGY: f64 = 1e-4;

pub fn clip_diagnostics(clips: &[AudioClip]) -> Vec<ClipDiagnostics> {
    clips.iter().map(diagnose).collect()
}

fn diagnose(clip: &AudioClip) -> ClipDiagnostics {
    if clip.is_empty() {
        return ClipDiagnostics {
            peak: 0.0,
            rms: 0.0,
            dc_offset: 0.0,
            silence_ratio: 1.0,
        };
    }
    let n = clip.len() as f64;
    let s = clip.samples.iter().map(|&x| x as f64);
    let peak = s.clone().fold(0.0, |m: f64, x| m.max(x.abs()));
    let rms = (s.clone().map(|x| x * x).sum::<f64>() / n).sqrt();
    let dc_offset = s.sum::<f64>() / n;
    let energy = crate::audio::short_term_energy(clip, &crate::audio::TrimConfig::default())
        .expect("non-empty clip with default framing");
    let silent = energy.iter().filter(|&&e| e < SILENCE_ENERGY).count();
    ClipDiagnostics {
        peak,
        rms,
        dc_offset,
        silence_ratio: silent as f64 / energy.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: f64, sd: f64) -> SystemStats {
        SystemStats::new(System::Baseline, 10, mean, sd)
    }

    fn rec(system: System, score: u8) -> RatingRecord {
        RatingRecord {
            participant: "p".into(),
            sample: "s".into(),
            system,
            score,
            ts: 0,
        }
    }

    #[test]
    fn aggregate_hand_cases() {
        let r: Vec<_> = [3, 4, 5].iter().map(|&s| rec(System::Baseline, s)).collect();
        let st = aggregate(&r).unwrap()[&System::Baseline];
        assert_eq!((st.n, st.mean, st.std_dev), (3, 4.0, 1.0));
        let st = aggregate(&[rec(System::Proposed, 7)]).unwrap()[&System::Proposed];
        assert_eq!((st.mean, st.std_dev), (7.0, 0.0));
        assert_eq!(aggregate(&[]), Err(EvalError::Empty));
        assert_eq!(aggregate(&[rec(System::Proposed, 9)]), Err(EvalError::Score(9)));
    }

    #[test]
    fn cohens_d_cases() {
        let d = cohens_d(&stats(3.39, 1.67), &stats(4.48, 1.70)).unwrap();
        assert!((d - 0.6469).abs() < 1e-4, "{d}");
        assert_eq!(cohens_d(&stats(2.0, 1.5), &stats(2.0, 1.5)).unwrap(), 0.0);
        assert_eq!(cohens_d(&stats(1.0, 1.0), &stats(2.0, 1.0)).unwrap(), 1.0);
        assert_eq!(
            cohens_d(&stats(1.0, 0.0), &stats(2.0, 0.0)),
            Err(EvalError::UndefinedEffect)
        );
    }

    #[test]
    fn bands() {
        assert_eq!(effect_band(0.65), EffectBand::Medium);
        assert_eq!(effect_band(0.0), EffectBand::Negligible);
        assert_eq!(effect_band(0.8), EffectBand::Large);
        assert_eq!(effect_band(0.2), EffectBand::Small);
        assert_eq!(effect_band(-0.5), EffectBand::Medium);
        assert_eq!(effect_band(0.1999), EffectBand::Negligible);
    }

    #[test]
    fn report_needs_both_systems() {
        let r = vec![rec(System::Baseline, 3), rec(System::Baseline, 4)];
        assert_eq!(
            EvaluationReport::from_records(&r, 0),
            Err(EvalError::MissingSystem(System::Proposed))
        );
    }

    #[test]
    fn diagnostics() {
        let d = clip_diagnostics(&[AudioClip::new(vec![0.0; 4096], 16_000)])[0];
        assert_eq!((d.peak, d.silence_ratio), (0.0, 1.0));
        let square: Vec<f32> = (0..4096).map(|i| if (i / 8) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d = clip_diagnostics(&[AudioClip::new(square, 16_000)])[0];
        assert_eq!((d.peak, d.rms, d.dc_offset), (1.0, 1.0, 0.0));
    }
}
