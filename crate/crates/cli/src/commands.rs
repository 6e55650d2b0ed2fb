use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use wavegan_core::audio::{
    fit_length, fixture_corpus, load_dataset, preprocess as preprocess_clip, read_labelled_wavs,
    write_wav, AudioClip, DatasetSummary, TrimConfig, CLIP_LEN, SAMPLE_RATE,
};
use wavegan_core::eval::{clip_diagnostics, parse_ratings, EvalError, EvaluationReport, System};
use wavegan_core::train::{
    clips_tensor, train_progressive, train_stage, Checkpoint, InputSource, MetricRecord, Resume,
    StageKind, TrainConfig, TrainError, TrainObserver, METRICS_HEADER,
};

use crate::args::{
    Command, EvaluateArgs, GenerateArgs, PreprocessArgs, StageSelect, TrainArgs,
};
use crate::manifest::{experiment_id, now_ms, RunManifest};
use crate::{service, CliError};

pub const STAGE1_CHECKPOINT: &str = "stage1.ckpt";
pub const STAGE2_CHECKPOINT: &str = "stage2.ckpt";
pub const NONFINITE_CHECKPOINT: &str = "nonfinite.ckpt";
pub const CONFIG_SNAPSHOT: &str = "config.txt";

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Preprocess(a) => preprocess(&a).map(drop),
        Command::Train(a) => train(&a).map(drop),
        Command::Generate(a) => generate(&a).map(drop),
        Command::Evaluate(a) => evaluate(&a).map(drop),
        Command::Serve(a) => {
            let rt = tokio::runtime::Runtime::new()
                .map_err(|e| CliError::Internal(format!("cannot start runtime: {e}")))?;
            rt.block_on(service::serve(&a))
        }
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::write(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::write(path, e))
}

/// Trims and length-fits `<input>/<label>/*.wav` into the same layout under
/// `--out`, plus `summary.json`.
pub fn preprocess(args: &PreprocessArgs) -> Result<DatasetSummary, CliError> {
    let cfg = TrimConfig {
        frame_length: args.frame_length,
        hop: args.hop,
        threshold_fraction: args.threshold,
        tail_trim: !args.no_tail_trim,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let labels: BTreeSet<String> = args.labels.iter().cloned().collect();
    let entries = load_dataset(&args.input, &labels, &cfg)?;
    for e in &entries {
        let path = args.out.join(&e.relative_path);
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
        write_file(&path, &write_wav(&e.processed))?;
    }
    let originals: Vec<AudioClip> = entries.iter().map(|e| e.original.clone()).collect();
    let summary = DatasetSummary::from_clips(&originals);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&args.out.join("summary.json"), (text + "\n").as_bytes())?;
    println!(
        "{} clips, mean duration {:.3}s (std {:.3}s), written to {}",
        summary.clip_count,
        summary.mean_duration,
        summary.std_duration,
        args.out.display()
    );
    for (label, count) in &summary.per_label_counts {
        println!("  {label}: {count}");
    }
    Ok(summary)
}

fn metrics_path(out: &Path, kind: StageKind) -> PathBuf {
    out.join(match kind {
        StageKind::WaveGan => "metrics_stage1.csv",
        StageKind::AudioToAudio => "metrics_stage2.csv",
    })
}

fn checkpoint_path(out: &Path, kind: StageKind) -> PathBuf {
    out.join(match kind {
        StageKind::WaveGan => STAGE1_CHECKPOINT,
        StageKind::AudioToAudio => STAGE2_CHECKPOINT,
    })
}

/// Keeps the header and the rows up to and including iteration `keep`.
fn truncate_metrics(path: &Path, keep: u64) -> Result<(), CliError> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(());
    };
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let iteration = line.split(',').next().and_then(|v| v.parse::<u64>().ok());
        if i == 0 || iteration.is_some_and(|it| it <= keep) {
            out.push_str(line);
            out.push('\n');
        }
    }
    write_file(path, out.as_bytes())
}

fn remove_if_present(path: &Path) -> Result<(), CliError> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::write(path, e)),
        _ => Ok(()),
    }
}

/// Replaces `path` through a temporary sibling so a crash leaves either the
/// old or the new checkpoint.
fn save_atomic(ckpt: &Checkpoint<f32>, path: &Path) -> Result<(), TrainError> {
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, ckpt.encode())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Streams per-stage metrics to CSV and keeps the stage checkpoints on disk.
struct RunObserver {
    out: PathBuf,
    writers: BTreeMap<&'static str, BufWriter<File>>,
}

impl RunObserver {
    fn writer(&mut self, kind: StageKind) -> Result<&mut BufWriter<File>, TrainError> {
        if !self.writers.contains_key(kind.as_str()) {
            let path = metrics_path(&self.out, kind);
            let fresh = fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
            let file = OpenOptions::new().create(true).append(true).open(&path)?;
            let mut w = BufWriter::new(file);
            if fresh {
                writeln!(w, "{METRICS_HEADER}")?;
            }
            self.writers.insert(kind.as_str(), w);
        }
        Ok(self.writers.get_mut(kind.as_str()).expect("inserted above"))
    }

    fn persist(&mut self, ckpt: &Checkpoint<f32>) -> Result<(), TrainError> {
        self.writer(ckpt.kind)?.flush()?;
        save_atomic(ckpt, &checkpoint_path(&self.out, ckpt.kind))
    }
}

impl TrainObserver<f32> for RunObserver {
    fn on_metrics(&mut self, record: &MetricRecord) -> Result<(), TrainError> {
        writeln!(self.writer(record.stage)?, "{}", record.csv_row())?;
        Ok(())
    }

    fn on_checkpoint(&mut self, ckpt: &Checkpoint<f32>) -> Result<(), TrainError> {
        log::info!("{} iteration {}", ckpt.kind.as_str(), ckpt.iteration);
        self.persist(ckpt)
    }

    fn on_stage_end(&mut self, ckpt: &Checkpoint<f32>) -> Result<(), TrainError> {
        self.persist(ckpt)
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint<f32>, CliError> {
    Checkpoint::load(path).map_err(|e| match e {
        TrainError::Io(io) => CliError::read(path, io),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

fn training_clips(args: &TrainArgs, seed: u64) -> Result<(Vec<AudioClip>, String), CliError> {
    if let Some(n) = args.fixtures {
        let cfg = TrimConfig::default();
        let clips = fixture_corpus(n, seed)
            .iter()
            .map(|c| preprocess_clip(c, &cfg))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok((clips, format!("fixtures:{n}")));
    }
    let root = args.data.as_ref().expect("clap requires --data or --fixtures");
    let clips = read_labelled_wavs(root, &BTreeSet::new())?
        .into_iter()
        .map(|(path, clip)| {
            if clip.sample_rate != SAMPLE_RATE {
                return Err(CliError::Data(format!(
                    "{}: {} Hz, need {SAMPLE_RATE} Hz",
                    path.display(),
                    clip.sample_rate
                )));
            }
            Ok(fit_length(&clip, CLIP_LEN))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((clips, root.display().to_string()))
}

fn resume_point(args: &TrainArgs) -> Result<Resume<f32>, CliError> {
    let s1 = checkpoint_path(&args.out, StageKind::WaveGan);
    let s2 = checkpoint_path(&args.out, StageKind::AudioToAudio);
    let m1 = metrics_path(&args.out, StageKind::WaveGan);
    let m2 = metrics_path(&args.out, StageKind::AudioToAudio);
    if !args.resume {
        for p in [&s1, &s2, &m1, &m2] {
            remove_if_present(p)?;
        }
        return Ok(Resume::Fresh);
    }
    if !s1.exists() {
        return Err(CliError::Data(format!("nothing to resume: {} is missing", s1.display())));
    }
    let stage1 = load_checkpoint(&s1)?;
    truncate_metrics(&m1, stage1.iteration)?;
    if args.stage == StageSelect::Full && s2.exists() {
        let stage2 = load_checkpoint(&s2)?;
        truncate_metrics(&m2, stage2.iteration)?;
        return Ok(Resume::Stage2 { stage1, stage2 });
    }
    remove_if_present(&m2)?;
    Ok(Resume::Stage1(stage1))
}

/// Runs one or both stages into `--out`, resuming from the checkpoints there
/// with `--resume`. Metrics files of a resumed run equal those of an
/// uninterrupted one.
pub fn train(args: &TrainArgs) -> Result<RunManifest, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
            TrainConfig::from_kv_text(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Data(format!("config: {e}")))?;
    let (clips, dataset) = training_clips(args, cfg.seed)?;
    let data = clips_tensor::<f32>(&clips)?;
    create_dir(&args.out)?;
    let config_text = cfg.to_kv_text();
    write_file(&args.out.join(CONFIG_SNAPSHOT), config_text.as_bytes())?;

    let resume = resume_point(args)?;
    let mut observer = RunObserver {
        out: args.out.clone(),
        writers: BTreeMap::new(),
    };
    let result = match args.stage {
        StageSelect::Full => train_progressive(&cfg, &data, resume, &mut observer).map(|_| ()),
        StageSelect::WaveganOnly => {
            let init = match resume {
                Resume::Stage1(c) => Some(c),
                _ => None,
            };
            train_stage(StageKind::WaveGan, &data, &cfg, init, InputSource::Noise, &mut observer)
                .map(drop)
        }
    };
    drop(observer);
    if let Err(TrainError::NonFinite { iteration, what, checkpoint }) = &result {
        let path = args.out.join(NONFINITE_CHECKPOINT);
        write_file(&path, checkpoint)?;
        return Err(CliError::Internal(format!(
            "non-finite {what} at iteration {iteration}; state saved to {}",
            path.display()
        )));
    }
    result?;

    let mut checkpoints = BTreeMap::new();
    let mut metrics = BTreeMap::new();
    let kinds: &[StageKind] = match args.stage {
        StageSelect::Full => &[StageKind::WaveGan, StageKind::AudioToAudio],
        StageSelect::WaveganOnly => &[StageKind::WaveGan],
    };
    for &kind in kinds {
        checkpoints.insert(kind.as_str().to_string(), checkpoint_path(&args.out, kind));
        let m = metrics_path(&args.out, kind);
        if !m.exists() {
            write_file(&m, format!("{METRICS_HEADER}\n").as_bytes())?;
        }
        metrics.insert(kind.as_str().to_string(), m);
    }
    let manifest = RunManifest {
        experiment_id: experiment_id(&dataset, &config_text),
        dataset,
        checkpoints,
        metrics,
        generated: Vec::new(),
        config: config_text,
        created_ms: now_ms(),
    };
    let path = manifest.write(&args.out)?;
    println!("{} complete; manifest at {}", manifest.experiment_id, path.display());
    Ok(manifest)
}

/// Writes `--n` clips per requested system as `<system>_<index>.wav`.
pub fn generate(args: &GenerateArgs) -> Result<Vec<PathBuf>, CliError> {
    let requests = [
        (System::Baseline, &args.baseline, StageKind::WaveGan),
        (System::Proposed, &args.proposed, StageKind::AudioToAudio),
    ];
    let mut loaded = Vec::new();
    for (system, path, kind) in requests {
        let Some(path) = path else { continue };
        let ckpt = load_checkpoint(path)?;
        if ckpt.kind != kind {
            return Err(CliError::Data(format!(
                "{} holds a {} stage; --{system} needs {}",
                path.display(),
                ckpt.kind.as_str(),
                kind.as_str()
            )));
        }
        loaded.push((system, ckpt));
    }
    create_dir(&args.out)?;
    let mut written = Vec::new();
    for (system, ckpt) in loaded {
        let pipeline = ckpt.pipeline()?;
        let clips = wavegan_core::train::generate(&pipeline, args.n, args.seed, ckpt.config.noise_range)?;
        for (i, clip) in clips.iter().enumerate() {
            let path = args.out.join(format!("{system}_{i:03}.wav"));
            write_file(&path, &write_wav(clip))?;
            written.push(path);
        }
        if !clips.is_empty() {
            let diag = clip_diagnostics(&clips);
            let n = diag.len() as f64;
            let peak = diag.iter().map(|d| d.peak).sum::<f64>() / n;
            let rms = diag.iter().map(|d| d.rms).sum::<f64>() / n;
            let silence = diag.iter().map(|d| d.silence_ratio).sum::<f64>() / n;
            println!(
                "{system}: {} clips, mean peak {peak:.4}, mean rms {rms:.4}, mean silence ratio {silence:.3}",
                clips.len()
            );
        }
    }
    Ok(written)
}

fn default_table_path(ratings: &Path) -> PathBuf {
    let stem = ratings
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ratings".into());
    ratings.with_file_name(format!("{stem}_table.csv"))
}

/// Reads a ratings file, reports malformed lines and prints the summary.
pub fn evaluate(args: &EvaluateArgs) -> Result<EvaluationReport, CliError> {
    let text = fs::read_to_string(&args.ratings).map_err(|e| CliError::read(&args.ratings, e))?;
    let parsed = parse_ratings(&text);
    for e in &parsed.skipped {
        log::warn!("{}: skipping {e}", args.ratings.display());
    }
    let report = EvaluationReport::from_records(&parsed.records, parsed.skipped.len()).map_err(
        |e| match e {
            EvalError::Empty => {
                CliError::Data(format!("{}: no valid ratings", args.ratings.display()))
            }
            EvalError::MissingSystem(s) => CliError::Data(format!(
                "{}: no ratings for {s}; both systems are needed",
                args.ratings.display()
            )),
            other => other.into(),
        },
    )?;
    print!("{}", report.summary());
    let table = args.out.clone().unwrap_or_else(|| default_table_path(&args.ratings));
    write_file(&table, report.table_csv().as_bytes())?;
    println!("table written to {}", table.display());
    Ok(report)
}
