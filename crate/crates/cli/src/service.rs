//! HTTP rating service for the listening test. Samples are addressed by
//! opaque ids; ratings are appended to a JSON-lines file and synced to disk
//! before the request is acknowledged.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Mutex;
use wavegan_core::eval::{
    aggregate, parse_ratings, EvaluationReport, RatingRecord, System, SystemStats,
};

use crate::args::ServeArgs;
use crate::manifest::now_ms;
use crate::CliError;

/// One servable WAV file.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub file_name: String,
    pub path: PathBuf,
    pub system: System,
}

/// 16 hex digits of the SHA-256 of the file name and contents.
pub fn sample_id(file_name: &str, bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(file_name.as_bytes());
    h.update([0]);
    h.update(bytes);
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// The published sample set: every `baseline_*.wav` and `proposed_*.wav`.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    samples: BTreeMap<String, Sample>,
}

impl Catalog {
    pub fn scan(dir: &Path) -> Result<Self, CliError> {
        let mut samples = BTreeMap::new();
        let entries = fs::read_dir(dir).map_err(|e| CliError::read(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| CliError::read(dir, e))?.path();
            let Some(file_name) = path.file_name().map(|n| n.to_string_lossy().into_owned()) else {
                continue;
            };
            if !file_name.to_ascii_lowercase().ends_with(".wav") {
                continue;
            }
            let system = match file_name.split_once('_').map(|(tag, _)| tag.parse::<System>()) {
                Some(Ok(s)) => s,
                _ => {
                    log::warn!("ignoring {file_name}: no system tag");
                    continue;
                }
            };
            let bytes = fs::read(&path).map_err(|e| CliError::read(&path, e))?;
            let id = sample_id(&file_name, &bytes);
            samples.insert(
                id.clone(),
                Sample {
                    id,
                    file_name,
                    path,
                    system,
                },
            );
        }
        if samples.is_empty() {
            return Err(CliError::Data(format!("no tagged samples in {}", dir.display())));
        }
        Ok(Self { samples })
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.get(id)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn id_of_file(&self, file_name: &str) -> Option<&str> {
        self.samples
            .values()
            .find(|s| s.file_name == file_name)
            .map(|s| s.id.as_str())
    }

    /// Every sample id in an order drawn from the participant id alone.
    pub fn playlist(&self, participant: &str) -> Vec<String> {
        let digest = Sha256::digest(participant.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut ids: Vec<String> = self.samples.keys().cloned().collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        ids
    }
}

struct Ledger {
    file: File,
    seen: HashSet<(String, String)>,
}

impl Ledger {
    fn append(&mut self, record: &RatingRecord) -> std::io::Result<()> {
        let mut line = record.to_json_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()
    }
}

pub struct AppState {
    catalog: Catalog,
    ratings_path: PathBuf,
    ledger: Mutex<Ledger>,
}

impl AppState {
    /// Scans the samples and reopens the ratings file, restoring which
    /// (participant, sample) pairs are already rated.
    pub fn open(samples: &Path, ratings: &Path) -> Result<Self, CliError> {
        let catalog = Catalog::scan(samples)?;
        let existing = match fs::read_to_string(ratings) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(CliError::read(ratings, e)),
        };
        let seen = parse_ratings(&existing)
            .records
            .into_iter()
            .map(|r| (r.participant, r.sample))
            .collect();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(ratings)
            .map_err(|e| CliError::write(ratings, e))?;
        if !existing.is_empty() && !existing.ends_with('\n') {
            // a torn final line stays on its own line
            file.write_all(b"\n").map_err(|e| CliError::write(ratings, e))?;
        }
        Ok(Self {
            catalog,
            ratings_path: ratings.to_path_buf(),
            ledger: Mutex::new(Ledger { file, seen }),
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }
}

/// Live statistics over the persisted ratings file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultsView {
    pub records: usize,
    pub skipped: usize,
    pub systems: BTreeMap<System, SystemStats>,
    /// Present once both systems have ratings with nonzero spread.
    pub report: Option<EvaluationReport>,
}

impl ResultsView {
    /// Statistics of every complete line of `text`.
    pub fn from_text(text: &str) -> Self {
        let complete = text.rfind('\n').map_or("", |i| &text[..=i]);
        let parsed = parse_ratings(complete);
        let skipped = parsed.skipped.len();
        Self {
            records: parsed.records.len(),
            skipped,
            systems: aggregate(&parsed.records).unwrap_or_default(),
            report: EvaluationReport::from_records(&parsed.records, skipped).ok(),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", get(session))
        .route("/api/sample/{id}", get(sample))
        .route("/api/rating", post(rating))
        .route("/api/results", get(results))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    let body = serde_json::json!({ "error": message.into() });
    (status, Json(body)).into_response()
}

fn valid_participant(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Deserialize)]
struct SessionQuery {
    participant: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub participant: String,
    pub playlist: Vec<String>,
    /// Playlist ids this participant has already rated.
    pub rated: Vec<String>,
    /// Index of the first unrated sample; the playlist length when done.
    pub next: usize,
    pub complete: bool,
}

async fn session(State(state): State<Arc<AppState>>, Query(q): Query<SessionQuery>) -> Response {
    let participant = match q.participant {
        Some(p) if valid_participant(&p) => p,
        Some(_) => return error(StatusCode::BAD_REQUEST, "participant ids use [A-Za-z0-9_-], at most 64"),
        None => format!("p-{:032x}", rand::rng().random::<u128>()),
    };
    let playlist = state.catalog.playlist(&participant);
    let ledger = state.ledger.lock().await;
    let is_rated = |id: &String| ledger.seen.contains(&(participant.clone(), id.clone()));
    let rated: Vec<String> = playlist.iter().filter(|id| is_rated(id)).cloned().collect();
    let next = playlist.iter().position(|id| !is_rated(id)).unwrap_or(playlist.len());
    drop(ledger);
    let complete = next == playlist.len();
    Json(SessionView {
        participant,
        playlist,
        rated,
        next,
        complete,
    })
    .into_response()
}

async fn sample(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(s) = state.catalog.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown sample `{id}`"));
    };
    match tokio::fs::read(&s.path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Err(e) => {
            log::error!("reading {}: {e}", s.path.display());
            error(StatusCode::INTERNAL_SERVER_ERROR, "sample unavailable")
        }
    }
}

#[derive(Deserialize)]
struct RatingBody {
    participant: String,
    sample: String,
    score: i64,
}

async fn rating(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let body: RatingBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed rating: {e}")),
    };
    if !(1..=7).contains(&body.score) {
        return error(StatusCode::BAD_REQUEST, format!("score {} outside 1..=7", body.score));
    }
    if !valid_participant(&body.participant) {
        return error(StatusCode::BAD_REQUEST, "invalid participant id");
    }
    let Some(sample) = state.catalog.get(&body.sample) else {
        return error(StatusCode::NOT_FOUND, format!("unknown sample `{}`", body.sample));
    };
    let record = RatingRecord {
        participant: body.participant,
        sample: body.sample,
        system: sample.system,
        score: body.score as u8,
        ts: now_ms(),
    };
    let mut ledger = state.ledger.lock().await;
    let key = (record.participant.clone(), record.sample.clone());
    if ledger.seen.contains(&key) {
        return error(StatusCode::CONFLICT, "sample already rated by this participant");
    }
    if let Err(e) = ledger.append(&record) {
        log::error!("appending to {}: {e}", state.ratings_path.display());
        return error(StatusCode::INTERNAL_SERVER_ERROR, "rating not stored");
    }
    ledger.seen.insert(key);
    drop(ledger);
    let ack = serde_json::json!({ "participant": record.participant, "sample": record.sample, "score": record.score });
    (StatusCode::CREATED, Json(ack)).into_response()
}

async fn results(State(state): State<Arc<AppState>>) -> Response {
    match tokio::fs::read_to_string(&state.ratings_path).await {
        Ok(text) => Json(ResultsView::from_text(&text)).into_response(),
        Err(e) => {
            log::error!("reading {}: {e}", state.ratings_path.display());
            error(StatusCode::INTERNAL_SERVER_ERROR, "ratings unavailable")
        }
    }
}

pub async fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let state = Arc::new(AppState::open(&args.samples, &args.ratings)?);
    let listener = tokio::net::TcpListener::bind(&args.bind)
        .await
        .map_err(|e| CliError::Usage(format!("cannot bind {}: {e}", args.bind)))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    println!(
        "serving {} samples on http://{addr}, ratings in {}",
        state.catalog.len(),
        args.ratings.display()
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Internal(format!("server: {e}")))
}
