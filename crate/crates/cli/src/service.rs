//! JSON-over-HTTP access to a recorded drive and the answer model.
//!
//! The session replays the recording of the training track. Everything is
//! read-only except the session cursor (one mutex, so control commands are
//! serialized) and the history log (append-only, single writer).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use xdrive_core::dataset::{FrameRecord, Recording};
use xdrive_core::render::{encode_frame, Frame, RenderConfig, RenderError};
use xdrive_core::sim::{ActionCategory, Env};
use xdrive_core::vqa::{AnswerModel, VqaError};

use crate::stages::{env_for, load_recording, load_vqa};
use crate::{answer_rows, AnswerRow, CliError, RunConfig};

pub const PORT_VAR: &str = "XDRIVE_PORT";
pub const DEFAULT_PORT: u16 = 8080;

/// Recorded drives, rendered on request.
pub struct FrameStore {
    sources: Vec<(Env, Recording)>,
    render: RenderConfig,
    index: HashMap<String, (usize, usize)>,
}

impl FrameStore {
    /// The first source is the one the session replays.
    pub fn new(sources: Vec<(Env, Recording)>, render: RenderConfig) -> Self {
        let mut index = HashMap::new();
        for (s, (_, rec)) in sources.iter().enumerate() {
            for (i, f) in rec.frames.iter().enumerate() {
                index.insert(f.frame_id.clone(), (s, i));
            }
        }
        Self { sources, render, index }
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        let mut sources = Vec::new();
        for track in [&cfg.track, &cfg.heldout_track] {
            sources.push((env_for(cfg, track)?, load_recording(cfg, track, "serve")?));
        }
        Ok(Self::new(sources, cfg.render_config()))
    }

    pub fn replay(&self) -> &Recording {
        &self.sources[0].1
    }

    pub fn record(&self, frame_id: &str) -> Option<&FrameRecord> {
        let &(s, i) = self.index.get(frame_id)?;
        Some(&self.sources[s].1.frames[i])
    }

    pub fn render(&self, frame_id: &str) -> Option<Result<Frame, RenderError>> {
        let &(s, i) = self.index.get(frame_id)?;
        let (env, rec) = &self.sources[s];
        Some(rec.render(env, i, &self.render))
    }
}

pub struct Loaded {
    pub model: Arc<dyn AnswerModel>,
    pub frames: FrameStore,
    /// Answers per `/api/ask` unless the request says otherwise.
    pub k: usize,
}

impl Loaded {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(Self {
            model: Arc::new(load_vqa(&cfg.model_dir(), "serve")?),
            frames: FrameStore::from_config(cfg)?,
            k: cfg.k,
        })
    }
}

/// Replay cursor. While playing, the position is derived from the time
/// since `play`, so nothing has to tick in the background.
#[derive(Debug, Clone)]
pub struct Session {
    index: usize,
    len: usize,
    fps: f64,
    playing_since: Option<Instant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Play,
    Pause,
    Step,
    Seek,
}

impl Session {
    pub fn new(len: usize, fps: f64) -> Self {
        Self {
            index: 0,
            len,
            fps,
            playing_since: None,
        }
    }

    pub fn position(&self, now: Instant) -> usize {
        match self.playing_since {
            Some(t0) => {
                let advanced = (now.saturating_duration_since(t0).as_secs_f64() * self.fps) as usize;
                (self.index + advanced).min(self.len.saturating_sub(1))
            }
            None => self.index,
        }
    }

    pub fn playing(&self) -> bool {
        self.playing_since.is_some()
    }

    /// `step` moves by `arg` frames (default 1) and pauses; `seek` takes an
    /// index.
    pub fn control(&mut self, cmd: Command, arg: Option<i64>, now: Instant) -> Result<(), String> {
        let here = self.position(now);
        let last = self.len.saturating_sub(1) as i64;
        match cmd {
            Command::Play => {
                self.index = here;
                self.playing_since = Some(now);
            }
            Command::Pause => {
                self.index = here;
                self.playing_since = None;
            }
            Command::Step => {
                self.index = (here as i64 + arg.unwrap_or(1)).clamp(0, last) as usize;
                self.playing_since = None;
            }
            Command::Seek => {
                let to = arg.ok_or("seek needs an `arg` frame index")?;
                if !(0..=last).contains(&to) {
                    return Err(format!("seek index {to} outside 0..={last}"));
                }
                self.index = to as usize;
                if self.playing_since.is_some() {
                    self.playing_since = Some(now);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAHistoryEntry {
    /// Milliseconds since the Unix epoch; never decreases along the log.
    pub timestamp: u64,
    pub frame_id: String,
    pub action_category: Option<ActionCategory>,
    pub question: String,
    pub answers: Vec<AnswerRow>,
    pub chosen: String,
}

/// Append-only log, mirrored to a JSONL file when a path is given.
pub struct History {
    entries: Vec<QAHistoryEntry>,
    file: Option<File>,
}

impl History {
    pub fn in_memory() -> Self {
        Self {
            entries: Vec::new(),
            file: None,
        }
    }

    /// Continue the log at `path`, keeping what earlier runs wrote.
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let io = |source| CliError::File {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut entries = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                entries.push(
                    serde_json::from_str(&line)
                        .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?,
                );
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self {
            entries,
            file: Some(file),
        })
    }

    pub fn entries(&self) -> &[QAHistoryEntry] {
        &self.entries
    }

    pub fn append(&mut self, mut entry: QAHistoryEntry) -> std::io::Result<()> {
        if let Some(prev) = self.entries.last() {
            entry.timestamp = entry.timestamp.max(prev.timestamp);
        }
        if let Some(f) = &mut self.file {
            let mut line = serde_json::to_string(&entry).expect("entry serializes");
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries.push(entry);
        Ok(())
    }
}

enum Models {
    Loading,
    Failed(String),
    Ready(Arc<Loaded>),
}

pub struct AppState {
    models: RwLock<Models>,
    session: Mutex<Session>,
    history: Mutex<History>,
    playback_fps: f64,
}

impl AppState {
    /// Serves 503 until [`install`](Self::install) is called.
    pub fn new(history: History, playback_fps: f64) -> Arc<Self> {
        Arc::new(Self {
            models: RwLock::new(Models::Loading),
            session: Mutex::new(Session::new(0, playback_fps)),
            history: Mutex::new(history),
            playback_fps,
        })
    }

    pub fn install(&self, loaded: Loaded) {
        *self.session.lock().expect("session lock") = Session::new(loaded.frames.replay().frames.len(), self.playback_fps);
        *self.models.write().expect("models lock") = Models::Ready(Arc::new(loaded));
    }

    pub fn fail(&self, reason: String) {
        *self.models.write().expect("models lock") = Models::Failed(reason);
    }

    fn loaded(&self) -> Result<Arc<Loaded>, ApiError> {
        match &*self.models.read().expect("models lock") {
            Models::Ready(l) => Ok(l.clone()),
            Models::Loading => Err(ApiError(StatusCode::SERVICE_UNAVAILABLE, "models are still loading".into())),
            Models::Failed(e) => Err(ApiError(StatusCode::SERVICE_UNAVAILABLE, format!("models failed to load: {e}"))),
        }
    }

    pub fn history(&self) -> Vec<QAHistoryEntry> {
        self.history.lock().expect("history lock").entries().to_vec()
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn not_found(frame_id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown frame `{frame_id}`"))
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub track_id: String,
    pub frame_id: String,
    pub index: usize,
    pub frame_count: usize,
    pub sim_time: f64,
    pub action_category: ActionCategory,
    pub playing: bool,
    pub fps: f64,
}

fn session_view(loaded: &Loaded, session: &Session) -> Result<SessionView, ApiError> {
    let rec = loaded.frames.replay();
    let index = session.position(Instant::now());
    let f = rec.frames.get(index).ok_or_else(|| internal("the replayed recording has no frames"))?;
    Ok(SessionView {
        track_id: rec.track_id.clone(),
        frame_id: f.frame_id.clone(),
        index,
        frame_count: rec.frames.len(),
        sim_time: f.sim_time,
        action_category: f.category,
        playing: session.playing(),
        fps: session.fps,
    })
}

async fn get_session(State(state): State<Arc<AppState>>) -> Result<Json<SessionView>, ApiError> {
    let loaded = state.loaded()?;
    let session = state.session.lock().expect("session lock");
    Ok(Json(session_view(&loaded, &session)?))
}

async fn get_frame(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let loaded = state.loaded()?;
    let png = tokio::task::spawn_blocking(move || {
        let frame = loaded.frames.render(&id).ok_or_else(|| not_found(&id))?.map_err(internal)?;
        encode_frame(&frame).map_err(internal)
    })
    .await
    .map_err(internal)??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Deserialize)]
struct AskRequest {
    frame_id: String,
    question: String,
    k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub answers: Vec<AnswerRow>,
    pub latency_ms: f64,
}

async fn ask(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<AskResponse>, ApiError> {
    let req: AskRequest = serde_json::from_slice(&body).map_err(|e| bad_request(format!("malformed body: {e}")))?;
    if req.question.trim().is_empty() {
        return Err(bad_request(VqaError::EmptyQuestion.to_string()));
    }
    let loaded = state.loaded()?;
    let started = Instant::now();
    let k = req.k.unwrap_or(loaded.k);
    let id = req.frame_id.clone();
    let question = req.question.clone();
    let (category, prediction) = tokio::task::spawn_blocking(move || {
        let category = loaded.frames.record(&id).ok_or_else(|| not_found(&id))?.category;
        let frame = loaded.frames.render(&id).ok_or_else(|| not_found(&id))?.map_err(internal)?;
        let p = loaded.model.predict_topk(&frame, &question, k).map_err(|e| match e {
            VqaError::EmptyQuestion | VqaError::InvalidK { .. } => bad_request(e.to_string()),
            other => internal(other),
        })?;
        Ok::<_, ApiError>((category, p))
    })
    .await
    .map_err(internal)??;
    let answers = answer_rows(&prediction);
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;

    let entry = QAHistoryEntry {
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
        frame_id: req.frame_id,
        action_category: Some(category),
        question: req.question,
        chosen: prediction.top().text.clone(),
        answers: answers.clone(),
    };
    state.history.lock().expect("history lock").append(entry).map_err(internal)?;
    Ok(Json(AskResponse { answers, latency_ms }))
}

#[derive(Debug, Deserialize)]
struct ControlRequest {
    command: Command,
    #[serde(default)]
    arg: Option<Value>,
}

async fn control(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SessionView>, ApiError> {
    let req: ControlRequest =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("malformed body: {e}")))?;
    let loaded = state.loaded()?;
    let arg = match &req.arg {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => Some(n.as_i64().ok_or_else(|| bad_request("`arg` must be an integer"))?),
        // seeking by frame id
        Some(Value::String(id)) if req.command == Command::Seek => Some(
            loaded
                .frames
                .replay()
                .frames
                .iter()
                .position(|f| &f.frame_id == id)
                .ok_or_else(|| not_found(id))? as i64,
        ),
        Some(_) => return Err(bad_request("`arg` must be an integer")),
    };
    let mut session = state.session.lock().expect("session lock");
    session.control(req.command, arg, Instant::now()).map_err(bad_request)?;
    Ok(Json(session_view(&loaded, &session)?))
}

async fn get_history(State(state): State<Arc<AppState>>) -> Json<Vec<QAHistoryEntry>> {
    Json(state.history())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/frames/{id}", get(get_frame))
        .route("/api/ask", post(ask))
        .route("/api/control", post(control))
        .route("/api/history", get(get_history))
        .with_state(state)
}

/// `XDRIVE_PORT`, or 8080.
pub fn port_from_env() -> Result<u16, CliError> {
    match std::env::var(PORT_VAR) {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Config(format!("{PORT_VAR}={v} is not a port number"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

/// Bind, start loading the models in the background and serve until
/// ctrl-c. Requests made while loading get 503.
pub async fn serve(cfg: RunConfig, addr: SocketAddr) -> Result<(), CliError> {
    let state = AppState::new(History::open(&cfg.history_path())?, cfg.playback_fps);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    let loading = state.clone();
    tokio::task::spawn_blocking(move || match Loaded::from_config(&cfg) {
        Ok(l) => {
            loading.install(l);
            eprintln!("models loaded");
        }
        Err(e) => {
            eprintln!("error: {e}");
            loading.fail(e.to_string());
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
