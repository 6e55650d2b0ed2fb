use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::trim::preprocess;
use super::{read_wav, AudioClip, AudioError, Result, TrimConfig};

/// Statistics over the original (untrimmed) clip durations.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct DatasetSummary {
    pub clip_count: usize,
    pub mean_duration: f64,
    pub std_duration: f64,
    pub per_label_counts: BTreeMap<String, usize>,
}

impl DatasetSummary {
    pub fn from_clips(clips: &[AudioClip]) -> Self {
        let durations: Vec<f64> = clips.iter().map(AudioClip::duration_secs).collect();
        let n = durations.len();
        let mean = if n == 0 {
            0.0
        } else {
            durations.iter().sum::<f64>() / n as f64
        };
        let std = if n < 2 {
            0.0
        } else {
            (durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let mut per_label_counts = BTreeMap::new();
        for c in clips {
            let label = c.label.clone().unwrap_or_default();
            *per_label_counts.entry(label).or_insert(0) += 1;
        }
        Self {
            clip_count: n,
            mean_duration: mean,
            std_duration: std,
            per_label_counts,
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

/// Loads `<root>/<label>/*.wav`, keeping only `labels` (all subdirectories if
/// empty). Returns preprocessed clips plus a summary of the original
/// durations. Unreadable files are skipped with a warning.
pub fn ingest_dataset(
    root: &Path,
    labels: &BTreeSet<String>,
    cfg: &TrimConfig,
) -> Result<(Vec<AudioClip>, DatasetSummary)> {
    let entries = load_dataset(root, labels, cfg)?;
    let originals: Vec<AudioClip> = entries.iter().map(|e| e.original.clone()).collect();
    let summary = DatasetSummary::from_clips(&originals);
    Ok((entries.into_iter().map(|e| e.processed).collect(), summary))
}

/// One file of a dataset: its path relative to the root, the clip as read
/// and the trimmed, length-fitted clip.
#[derive(Clone, Debug)]
pub struct DatasetEntry {
    pub relative_path: PathBuf,
    pub original: AudioClip,
    pub processed: AudioClip,
}

/// Like [`ingest_dataset`] but keeps each file's path and raw clip.
pub fn load_dataset(
    root: &Path,
    labels: &BTreeSet<String>,
    cfg: &TrimConfig,
) -> Result<Vec<DatasetEntry>> {
    cfg.validate()?;
    read_labelled_wavs(root, labels)?
        .into_iter()
        .map(|(relative_path, clip)| {
            Ok(DatasetEntry {
                relative_path,
                processed: preprocess(&clip, cfg)?,
                original: clip,
            })
        })
        .collect()
}

/// Every readable `<root>/<label>/*.wav` in path order, labelled with its
/// directory name and keyed by its path relative to `root`. Errors with
/// [`AudioError::EmptyDataset`] when nothing is found.
pub fn read_labelled_wavs(
    root: &Path,
    labels: &BTreeSet<String>,
) -> Result<Vec<(PathBuf, AudioClip)>> {
    let mut out = Vec::new();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !labels.is_empty() && !labels.contains(&label) {
            continue;
        }
        for path in sorted_entries(&dir)? {
            let is_wav = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
            if !is_wav {
                continue;
            }
            match fs::read(&path)
                .map_err(AudioError::from)
                .and_then(|b| read_wav(&b))
            {
                Ok(c) => {
                    let relative = path.strip_prefix(root).unwrap_or(&path).to_path_buf();
                    out.push((relative, c.with_label(label.clone())));
                }
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
    }
    if out.is_empty() {
        return Err(AudioError::EmptyDataset(root.display().to_string()));
    }
    Ok(out)
}
