//! Rating service endpoints, driven in-process.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use wavegan_cli::args::EvaluateArgs;
use wavegan_cli::commands;
use wavegan_cli::service::{router, AppState, ResultsView, SessionView};
use wavegan_core::audio::{synth_fixture, write_wav, FixtureKind};
use wavegan_core::eval::{aggregate, parse_ratings, table1_fixture};

fn sample_dir(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    for system in ["baseline", "proposed"] {
        for k in 0..10u64 {
            let clip = synth_fixture(FixtureKind::Tone, k + if system == "baseline" { 0 } else { 100 });
            fs::write(dir.join(format!("{system}_{k:03}.wav")), write_wav(&clip)).unwrap();
        }
    }
    fs::write(dir.join("README.txt"), "not a sample").unwrap();
    fs::write(dir.join("other_000.wav"), b"RIFF").unwrap();
}

struct Harness {
    _dir: tempfile::TempDir,
    state: Arc<AppState>,
    app: Router,
    ratings: std::path::PathBuf,
    samples: std::path::PathBuf,
}

fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples");
    sample_dir(&samples);
    let ratings = dir.path().join("ratings.jsonl");
    let state = Arc::new(AppState::open(&samples, &ratings).unwrap());
    let app = router(state.clone());
    Harness { _dir: dir, state, app, ratings, samples }
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>, Option<String>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let ctype = res.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string());
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body, ctype)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>, Option<String>) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, body: String) -> StatusCode {
    let req = Request::post("/api/rating")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body))
        .unwrap();
    call(app, req).await.0
}

async fn session(app: &Router, participant: Option<&str>) -> SessionView {
    let uri = match participant {
        Some(p) => format!("/api/session?participant={p}"),
        None => "/api/session".into(),
    };
    let (status, body, _) = get(app, &uri).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_slice(&body).unwrap()
}

#[tokio::test]
async fn sessions_are_seeded_per_participant() {
    let h = harness();
    let a = session(&h.app, Some("alice")).await;
    let a2 = session(&h.app, Some("alice")).await;
    let b = session(&h.app, Some("bob")).await;
    assert_eq!(a.playlist.len(), 20);
    assert_eq!(a.playlist, a2.playlist);
    assert_ne!(a.playlist, b.playlist);
    let mut sa = a.playlist.clone();
    let mut sb = b.playlist.clone();
    sa.sort();
    sb.sort();
    assert_eq!(sa, sb);
    assert_eq!((a.next, a.complete), (0, false));

    let fresh = session(&h.app, None).await;
    assert!(fresh.participant.starts_with("p-"));
    assert_ne!(fresh.participant, session(&h.app, None).await.participant);
    assert_eq!(get(&h.app, "/api/session?participant=a%20b").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn ids_are_opaque_and_samples_verbatim() {
    let h = harness();
    let s = session(&h.app, Some("carol")).await;
    let text = serde_json::to_string(&s).unwrap();
    assert!(!text.contains("baseline") && !text.contains("proposed"));
    for id in &s.playlist {
        assert_eq!(id.len(), 16);
        let (status, body, ctype) = get(&h.app, &format!("/api/sample/{id}")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(ctype.as_deref(), Some("audio/wav"));
        let file = &h.state.catalog().get(id).unwrap().path;
        assert_eq!(body, fs::read(file).unwrap());
    }
    assert_eq!(get(&h.app, "/api/sample/0000000000000000").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn rating_validation_and_duplicates() {
    let h = harness();
    let id = session(&h.app, Some("dave")).await.playlist[0].clone();
    let body = |score: i64| json!({ "participant": "dave", "sample": id, "score": score }).to_string();
    assert_eq!(post(&h.app, body(9)).await, StatusCode::BAD_REQUEST);
    assert_eq!(post(&h.app, body(0)).await, StatusCode::BAD_REQUEST);
    assert_eq!(post(&h.app, "{not json".into()).await, StatusCode::BAD_REQUEST);
    assert_eq!(post(&h.app, json!({ "participant": "dave", "score": 3 }).to_string()).await, StatusCode::BAD_REQUEST);
    let unknown = json!({ "participant": "dave", "sample": "ffffffffffffffff", "score": 3 }).to_string();
    assert_eq!(post(&h.app, unknown).await, StatusCode::NOT_FOUND);
    assert_eq!(post(&h.app, body(4)).await, StatusCode::CREATED);
    assert_eq!(post(&h.app, body(5)).await, StatusCode::CONFLICT);

    let stored = parse_ratings(&fs::read_to_string(&h.ratings).unwrap());
    assert_eq!(stored.records.len(), 1);
    assert_eq!(stored.records[0].score, 4);
    assert_eq!(stored.records[0].sample, id);

    let s = session(&h.app, Some("dave")).await;
    assert_eq!((s.next, s.rated.clone()), (1, vec![id.clone()]));

    // a restarted service still knows the acknowledged rating
    let restarted = router(Arc::new(AppState::open(&h.samples, &h.ratings).unwrap()));
    assert_eq!(post(&restarted, body(6)).await, StatusCode::CONFLICT);
    assert_eq!(session(&restarted, Some("dave")).await.next, 1);
}

#[tokio::test]
async fn torn_last_line_is_isolated_on_restart() {
    let h = harness();
    fs::write(&h.ratings, "{\"participant\":\"x\",\"sam").unwrap();
    let app = router(Arc::new(AppState::open(&h.samples, &h.ratings).unwrap()));
    let id = session(&app, Some("erin")).await.playlist[0].clone();
    let body = json!({ "participant": "erin", "sample": id, "score": 2 }).to_string();
    assert_eq!(post(&app, body).await, StatusCode::CREATED);
    let parsed = parse_ratings(&fs::read_to_string(&h.ratings).unwrap());
    assert_eq!((parsed.records.len(), parsed.skipped.len()), (1, 1));
}

#[tokio::test]
async fn six_hundred_posts_match_evaluate() {
    let h = harness();
    let fixture = table1_fixture(11);
    for r in &fixture {
        let file = format!("{}.wav", r.sample);
        let id = h.state.catalog().id_of_file(&file).unwrap().to_string();
        let body = json!({ "participant": r.participant, "sample": id, "score": r.score }).to_string();
        assert_eq!(post(&h.app, body).await, StatusCode::CREATED);
    }
    let (status, body, _) = get(&h.app, "/api/results").await;
    assert_eq!(status, StatusCode::OK);
    let live: Value = serde_json::from_slice(&body).unwrap();

    let report = commands::evaluate(&EvaluateArgs { ratings: h.ratings.clone(), out: Some(h.ratings.with_extension("csv")) }).unwrap();
    assert_eq!(live["report"], serde_json::to_value(&report).unwrap());
    assert_eq!(live["records"], 600);
    let on_disk = ResultsView::from_text(&fs::read_to_string(&h.ratings).unwrap());
    assert_eq!(on_disk.systems, aggregate(&fixture).unwrap());
    assert_eq!(live, serde_json::to_value(&on_disk).unwrap());
    assert!((report.cohens_d - 0.65).abs() <= 0.01);

    let s = session(&h.app, Some("participant-00")).await;
    assert!(s.complete);
}

#[tokio::test]
async fn results_before_any_rating() {
    let h = harness();
    let (status, body, _) = get(&h.app, "/api/results").await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["records"], 0);
    assert!(v["report"].is_null());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_posts_are_all_persisted() {
    let h = harness();
    let mut tasks = Vec::new();
    for p in 0..8 {
        let app = h.app.clone();
        tasks.push(tokio::spawn(async move {
            let participant = format!("c{p}");
            let s = session(&app, Some(&participant)).await;
            for id in s.playlist {
                let body = json!({ "participant": participant, "sample": id, "score": 1 + p % 7 }).to_string();
                assert_eq!(post(&app, body).await, StatusCode::CREATED);
            }
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    let parsed = parse_ratings(&fs::read_to_string(&h.ratings).unwrap());
    assert_eq!((parsed.records.len(), parsed.skipped.len()), (160, 0));
}
