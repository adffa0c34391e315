use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use xdrive_cli::service::{router, AppState, Command, FrameStore, History, Loaded, QAHistoryEntry, Session};
use xdrive_core::dataset::{answer_for, default_distractors, question_for, record_drive, AnswerVocab};
use xdrive_core::render::{decode_frame, RenderConfig};
use xdrive_core::sim::{ActionCategory, Env, EnvConfig};
use xdrive_core::vqa::OracleModel;

fn store() -> FrameStore {
    let env = Env::builtin("track-a", 15, EnvConfig::default()).unwrap();
    let rec = record_drive(&env, "track-a", 2.0, |s| Ok(env.follow_route(s, 6.0, 8.0))).unwrap();
    FrameStore::new(vec![(env, rec)], RenderConfig::desk())
}

fn loaded_state(history: History) -> Arc<AppState> {
    let state = AppState::new(history, 10.0);
    state.install(Loaded {
        model: Arc::new(OracleModel {
            answers: AnswerVocab::build(&default_distractors()).answers,
        }),
        frames: store(),
        k: 5,
    });
    state
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let text = body.map(|b| b.to_string());
    let (s, bytes) = call(state, method, uri, text.as_deref()).await;
    (s, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn everything_is_503_until_models_load() {
    let state = AppState::new(History::in_memory(), 10.0);
    for (m, uri, body) in [
        ("GET", "/api/session", None),
        ("GET", "/api/frames/track-a-f00000", None),
        ("POST", "/api/ask", Some(json!({"frame_id": "track-a-f00000", "question": "Why?"}))),
        ("POST", "/api/control", Some(json!({"command": "play"}))),
    ] {
        let (s, v) = call_json(&state, m, uri, body).await;
        assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert!(v["error"].as_str().unwrap().contains("loading"));
    }
    // the log is readable regardless
    assert_eq!(call_json(&state, "GET", "/api/history", None).await.0, StatusCode::OK);

    state.fail("no model".into());
    let (s, v) = call_json(&state, "GET", "/api/session", None).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert!(v["error"].as_str().unwrap().contains("no model"));
}

#[tokio::test]
async fn ask_returns_ranked_answers() {
    let state = loaded_state(History::in_memory());
    let (_, session) = call_json(&state, "GET", "/api/session", None).await;
    let id = session["frame_id"].as_str().unwrap().to_string();
    let cat: ActionCategory = serde_json::from_value(session["action_category"].clone()).unwrap();

    let body = json!({"frame_id": id, "question": question_for(cat)});
    let (s, v) = call_json(&state, "POST", "/api/ask", Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK);
    let answers = v["answers"].as_array().unwrap();
    assert_eq!(answers.len(), 5);
    assert_eq!(answers[0]["text"], answer_for(cat));
    let probs: Vec<f64> = answers.iter().map(|a| a["prob"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));
    assert!(v["latency_ms"].as_f64().unwrap() >= 0.0);

    // asking again changes nothing but the log
    let (_, again) = call_json(&state, "POST", "/api/ask", Some(body)).await;
    assert_eq!(again["answers"], v["answers"]);
    let (_, later) = call_json(&state, "GET", "/api/session", None).await;
    assert_eq!(later, session);
    assert_eq!(state.history().len(), 2);

    let (_, one) = call_json(&state, "POST", "/api/ask", Some(json!({"frame_id": id, "question": "why", "k": 1}))).await;
    assert_eq!(one["answers"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn ask_rejects_bad_requests() {
    let state = loaded_state(History::in_memory());
    let cases: [(&str, StatusCode); 7] = [
        ("not json", StatusCode::BAD_REQUEST),
        ("{}", StatusCode::BAD_REQUEST),
        (r#"{"frame_id": 3, "question": "why"}"#, StatusCode::BAD_REQUEST),
        (r#"{"frame_id": "track-a-f00000", "question": ""}"#, StatusCode::BAD_REQUEST),
        (r#"{"frame_id": "track-a-f00000", "question": "   "}"#, StatusCode::BAD_REQUEST),
        (r#"{"frame_id": "track-a-f00000", "question": "why", "k": 0}"#, StatusCode::BAD_REQUEST),
        (r#"{"frame_id": "nope", "question": "why"}"#, StatusCode::NOT_FOUND),
    ];
    for (body, want) in cases {
        let (s, bytes) = call(&state, "POST", "/api/ask", Some(body)).await;
        assert_eq!(s, want, "{body}");
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        assert!(v["error"].is_string());
    }
    assert!(state.history().is_empty());
}

#[tokio::test]
async fn frames_are_png() {
    let state = loaded_state(History::in_memory());
    let (s, bytes) = call(&state, "GET", "/api/frames/track-a-f00003", None).await;
    assert_eq!(s, StatusCode::OK);
    let frame = decode_frame(&bytes).unwrap();
    assert_eq!((frame.width, frame.height, frame.channels), (64, 64, 1));
    assert_eq!(frame.meta.frame_id, "track-a-f00003");
    assert_eq!(call(&state, "GET", "/api/frames/track-z-f00000", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn control_moves_the_cursor() {
    let state = loaded_state(History::in_memory());
    let ctl = |body: Value| {
        let state = state.clone();
        async move { call_json(&state, "POST", "/api/control", Some(body)).await }
    };
    let (s, v) = ctl(json!({"command": "step"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["index"], 1);
    assert_eq!(ctl(json!({"command": "step", "arg": 3})).await.1["index"], 4);
    assert_eq!(ctl(json!({"command": "step", "arg": -10})).await.1["index"], 0);
    assert_eq!(ctl(json!({"command": "seek", "arg": 7})).await.1["frame_id"], "track-a-f00007");
    assert_eq!(ctl(json!({"command": "seek", "arg": "track-a-f00002"})).await.1["index"], 2);
    let n = ctl(json!({"command": "pause"})).await.1["frame_count"].as_u64().unwrap();
    assert_eq!(ctl(json!({"command": "step", "arg": 100000})).await.1["index"], n - 1);

    for bad in [
        json!({"command": "rewind"}),
        json!({"command": "seek"}),
        json!({"command": "seek", "arg": -1}),
        json!({"command": "seek", "arg": n}),
        json!({"command": "step", "arg": 1.5}),
        json!({"arg": 1}),
    ] {
        assert_eq!(ctl(bad.clone()).await.0, StatusCode::BAD_REQUEST, "{bad}");
    }
    assert_eq!(ctl(json!({"command": "seek", "arg": "track-a-f99999"})).await.0, StatusCode::NOT_FOUND);

    let (_, v) = ctl(json!({"command": "play"})).await;
    assert_eq!(v["playing"], true);
}

#[test]
fn playing_advances_with_time() {
    let mut s = Session::new(100, 10.0);
    let t0 = Instant::now();
    s.control(Command::Seek, Some(5), t0).unwrap();
    s.control(Command::Play, None, t0).unwrap();
    assert_eq!(s.position(t0), 5);
    assert_eq!(s.position(t0 + Duration::from_millis(1050)), 15);
    assert_eq!(s.position(t0 + Duration::from_secs(60)), 99);
    s.control(Command::Pause, None, t0 + Duration::from_millis(2000)).unwrap();
    assert_eq!(s.position(t0 + Duration::from_secs(60)), 25);
    assert!(!s.playing());
}

#[tokio::test]
async fn history_is_logged_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h/history.jsonl");
    let state = loaded_state(History::open(&path).unwrap());
    let mut responses = Vec::new();
    for (i, cat) in ActionCategory::ALL.iter().enumerate() {
        let id = format!("track-a-f{:05}", i * 4);
        let (_, v) = call_json(&state, "POST", "/api/ask", Some(json!({"frame_id": id, "question": question_for(*cat)}))).await;
        responses.push(v["answers"].clone());
    }
    let (_, listed) = call_json(&state, "GET", "/api/history", None).await;
    let entries: Vec<QAHistoryEntry> = serde_json::from_value(listed).unwrap();
    assert_eq!(entries.len(), 5);
    assert!(entries.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    for (e, r) in entries.iter().zip(&responses) {
        assert_eq!(serde_json::to_value(&e.answers).unwrap(), *r);
        assert_eq!(e.chosen, e.answers[0].text);
        assert!(e.action_category.is_some());
    }

    // the file holds the same entries, and reopening appends after them
    let reopened = History::open(&path).unwrap();
    assert_eq!(reopened.entries(), &entries[..]);
    let state2 = loaded_state(reopened);
    for e in &entries {
        let (_, v) = call_json(&state2, "POST", "/api/ask", Some(json!({"frame_id": e.frame_id, "question": e.question}))).await;
        assert_eq!(serde_json::to_value(&e.answers).unwrap(), v["answers"]);
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 10);
}
