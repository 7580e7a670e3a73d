use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, patch, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

use notecast_core::llm::LlmBridge;
use notecast_core::narration::{
    insert_transition, make_interactive, set_scene_narration, TransitionPosition,
};
use notecast_core::notebook::parse_notebook;
use notecast_core::pipeline::{self, BuildRequest, PipelineError};
use notecast_core::render::{frame_file_name, OutputMode, AUDIO_FILE, MANIFEST_FILE};
use notecast_core::script::{self, DesignScript, Settings, Span};
use notecast_core::tts::Synthesizer;

use crate::config::{RenderMode, ServiceConfig};
use crate::error::ApiError;
use crate::jobs::{error_kind, ArtifactInfo, JobState, RenderJob, Scope};
use crate::session::Session;

struct SessionSlot {
    session: tokio::sync::Mutex<Session>,
    /// Render queue, started on first use.
    queue: OnceLock<mpsc::UnboundedSender<String>>,
}

pub struct AppState {
    pub config: ServiceConfig,
    bridge: Arc<LlmBridge>,
    synth: Arc<Synthesizer>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    jobs: RwLock<HashMap<String, Arc<Mutex<RenderJob>>>>,
}

impl AppState {
    /// Loads any sessions already stored under the data directory.
    pub fn new(config: ServiceConfig) -> Arc<AppState> {
        let bridge = Arc::new(config.llm.bridge());
        let synth = Arc::new(config.synthesizer());
        let sessions = Session::load_all(&config.data_dir)
            .into_iter()
            .map(|s| (s.id.clone(), Arc::new(slot(s))))
            .collect();
        Arc::new(AppState {
            config,
            bridge,
            synth,
            sessions: RwLock::new(sessions),
            jobs: RwLock::new(HashMap::new()),
        })
    }

    pub fn bridge(&self) -> &LlmBridge {
        &self.bridge
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session {id}")))
    }

    fn job(&self, id: &str) -> Result<Arc<Mutex<RenderJob>>, ApiError> {
        self.jobs
            .read()
            .expect("job map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown job {id}")))
    }

    fn run_job(
        &self,
        session: &Session,
        scope: &Scope,
        dir: &Path,
    ) -> Result<ArtifactInfo, PipelineError> {
        let io = |e: std::io::Error| PipelineError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        let mode = match &self.config.render {
            RenderMode::Frames => OutputMode::ImageSequence(dir.join("frames")),
            RenderMode::Mp4(encoder) => OutputMode::Mp4 {
                path: dir.join("video.mp4"),
                encoder: encoder.clone(),
            },
        };
        let voice = self.config.voice(&session.script.settings.voice);
        let scene = match scope {
            Scope::Full => None,
            Scope::Scene(id) => Some(id.as_str()),
        };
        let (_, artifact) = pipeline::build(&BuildRequest {
            script: &session.script,
            notebook: &session.notebook,
            flow: &session.flow,
            synth: &self.synth,
            voice: &voice,
            mode: &mode,
            scene,
        })?;
        if artifact.mp4_path.is_some() {
            let json = serde_json::to_vec_pretty(&artifact.manifest).expect("manifest serializes");
            std::fs::write(dir.join(MANIFEST_FILE), json).map_err(io)?;
        }
        let base = format!(
            "/artifacts/{}",
            dir.file_name().unwrap_or_default().to_string_lossy()
        );
        let mp4 = artifact.mp4_path.is_some();
        Ok(ArtifactInfo {
            format: if mp4 { "mp4" } else { "frames" }.into(),
            frame_count: artifact.frame_count,
            duration_ms: artifact.duration_ms,
            fps: artifact.manifest.fps,
            video_url: mp4.then(|| format!("{base}/video")),
            manifest_url: format!("{base}/manifest"),
            audio_url: format!("{base}/audio"),
            frame_url_template: (!mp4).then(|| format!("{base}/frames/{{n}}")),
        })
    }
}

fn slot(session: Session) -> SessionSlot {
    SessionSlot {
        session: tokio::sync::Mutex::new(session),
        queue: OnceLock::new(),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let sessions = Router::new()
        .route("/", get(get_session))
        .route("/flow", get(get_flow))
        .route("/flow/nodes/{node}", patch(patch_node))
        .route("/script", get(get_script).put(put_script))
        .route("/settings", patch(patch_settings))
        .route("/scenes/{scene}", patch(patch_scene))
        .route("/scenes/{scene}/emphasis", post(add_emphasis))
        .route("/scenes/{scene}/transitions", post(add_transition))
        .route("/emphasis/{emphasis}", delete(remove_emphasis))
        .route("/narrate", post(narrate))
        .route("/segments/{segment}/question", post(make_question))
        .route("/segments/{segment}/links", post(set_links))
        .route("/render", post(render));
    let mut app = Router::new()
        .route("/sessions", post(create_session))
        .nest("/sessions/{id}", sessions)
        .route("/jobs/{job}", get(get_job))
        .route("/artifacts/{job}/video", get(artifact_video))
        .route("/artifacts/{job}/manifest", get(artifact_manifest))
        .route("/artifacts/{job}/audio", get(artifact_audio))
        .route("/artifacts/{job}/frames/{n}", get(artifact_frame));
    if let Some(dir) = &state.config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.with_state(state)
}

type Shared = State<Arc<AppState>>;
type ApiResult = Result<Json<Value>, ApiError>;

fn with_extra(mut view: Value, extra: Value) -> Value {
    if let (Value::Object(v), Value::Object(e)) = (&mut view, extra) {
        v.extend(e);
    }
    view
}

/// Applies `f` to a copy of the session under its lock. The copy is stored,
/// with the version bumped, only when `f` succeeds.
async fn mutate<F>(state: &AppState, id: &str, version: u64, f: F) -> ApiResult
where
    F: FnOnce(&mut Session) -> Result<Value, ApiError>,
{
    let slot = state.slot(id)?;
    let mut guard = slot.session.lock().await;
    guard.check_version(version)?;
    let mut next = guard.clone();
    let extra = f(&mut next)?;
    commit(state, &mut guard, next, extra)
}

/// Like `mutate`, for edits that call the language model.
async fn mutate_blocking<F>(state: &Arc<AppState>, id: &str, version: u64, f: F) -> ApiResult
where
    F: FnOnce(&AppState, &mut Session) -> Result<Value, ApiError> + Send + 'static,
{
    let slot = state.slot(id)?;
    let mut guard = slot.session.lock().await;
    guard.check_version(version)?;
    let mut next = guard.clone();
    let st = state.clone();
    let (next, extra) = tokio::task::spawn_blocking(move || {
        let extra = f(&st, &mut next)?;
        Ok::<_, ApiError>((next, extra))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    commit(state, &mut guard, next, extra)
}

fn commit(state: &AppState, current: &mut Session, mut next: Session, extra: Value) -> ApiResult {
    next.version = current.version + 1;
    next.save(&state.config.data_dir)?;
    *current = next;
    Ok(Json(with_extra(current.view(), extra)))
}

async fn create_session(State(state): Shared, body: Bytes) -> ApiResult {
    let notebook = parse_notebook(&body)?;
    let st = state.clone();
    let session = tokio::task::spawn_blocking(move || {
        let flow = pipeline::logic_flow(&notebook, Some(st.bridge())).map_err(|e| match e {
            PipelineError::Llm(l) => ApiError::from(l),
            other => ApiError::invalid(other),
        })?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        Ok::<_, ApiError>(Session::create(id, notebook, flow, Settings::default()))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    session.save(&state.config.data_dir)?;
    let view = session.view();
    state
        .sessions
        .write()
        .expect("session map")
        .insert(session.id.clone(), Arc::new(slot(session)));
    Ok(Json(view))
}

async fn get_session(State(state): Shared, UrlPath(id): UrlPath<String>) -> ApiResult {
    let slot = state.slot(&id)?;
    let view = slot.session.lock().await.view();
    Ok(Json(view))
}

async fn get_flow(State(state): Shared, UrlPath(id): UrlPath<String>) -> ApiResult {
    let slot = state.slot(&id)?;
    let s = slot.session.lock().await;
    Ok(Json(json!({"version": s.version, "flow": s.flow})))
}

#[derive(Deserialize)]
struct NodePatch {
    version: u64,
    description: Option<String>,
    hidden: Option<bool>,
    /// Line boundaries of sub-steps; empty removes the split.
    boundaries: Option<Vec<usize>>,
}

async fn patch_node(
    State(state): Shared,
    UrlPath((id, node)): UrlPath<(String, usize)>,
    Json(p): Json<NodePatch>,
) -> ApiResult {
    mutate(&state, &id, p.version, |s| {
        if let Some(d) = &p.description {
            s.flow = s.flow.rename(node, d)?;
        }
        if let Some(b) = &p.boundaries {
            s.flow = s.flow.split_node(&s.notebook, node, b)?;
        }
        if let Some(h) = p.hidden {
            s.set_hidden(node, h)?;
        }
        if s.flow.node(node).is_none() {
            return Err(ApiError::NotFound(format!("unknown flow node {node}")));
        }
        Ok(json!({}))
    })
    .await
}

#[derive(Deserialize)]
struct VersionQuery {
    version: u64,
}

async fn get_script(
    State(state): Shared,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let s = slot.session.lock().await;
    let bytes = script::serialize(&s.script)?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/json".to_string()),
            (header::ETAG, format!("\"{}\"", s.version)),
        ],
        bytes,
    )
        .into_response())
}

async fn put_script(
    State(state): Shared,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<VersionQuery>,
    body: Bytes,
) -> ApiResult {
    let script = script::deserialize(&body)?;
    mutate(&state, &id, q.version, |s| {
        s.replace_script(script)?;
        Ok(json!({}))
    })
    .await
}

#[derive(Deserialize)]
struct SettingsPatch {
    version: u64,
    settings: Settings,
}

async fn patch_settings(
    State(state): Shared,
    UrlPath(id): UrlPath<String>,
    Json(p): Json<SettingsPatch>,
) -> ApiResult {
    mutate(&state, &id, p.version, |s| {
        let next = DesignScript {
            settings: p.settings,
            ..s.script.clone()
        };
        next.validate()?;
        s.script = next;
        Ok(json!({}))
    })
    .await
}

#[derive(Deserialize)]
struct ScenePatch {
    version: u64,
    include_outputs: Option<bool>,
    /// Author-written narration, split and classified like model output.
    narration: Option<String>,
}

async fn patch_scene(
    State(state): Shared,
    UrlPath((id, scene)): UrlPath<(String, String)>,
    Json(p): Json<ScenePatch>,
) -> ApiResult {
    mutate(&state, &id, p.version, |s| {
        if let Some(text) = &p.narration {
            s.script = set_scene_narration(&s.script, &scene, text, &s.notebook)?;
        }
        let include = p.include_outputs;
        s.script = s.script.with_scene(&scene, |sc| {
            let mut next = sc.clone();
            if let Some(v) = include {
                next.include_outputs = v;
            }
            Ok(next)
        })?;
        Ok(json!({}))
    })
    .await
}

#[derive(Deserialize)]
struct NewEmphasis {
    version: u64,
    /// Character offsets into the cell source.
    start: usize,
    end: usize,
    annotation: String,
}

async fn add_emphasis(
    State(state): Shared,
    UrlPath((id, scene)): UrlPath<(String, String)>,
    Json(p): Json<NewEmphasis>,
) -> ApiResult {
    mutate(&state, &id, p.version, |s| {
        let cell = s
            .script
            .scene(&scene)
            .ok_or_else(|| ApiError::NotFound(format!("unknown scene {scene}")))?
            .cell_index;
        let source = s.source_of(cell)?.to_string();
        let mut created = None;
        s.script = s.script.with_scene(&scene, |sc| {
            let (next, e) = sc.add_emphasis(&source, Span::new(p.start, p.end), &p.annotation)?;
            created = Some(e);
            Ok(next)
        })?;
        Ok(json!({"created": created}))
    })
    .await
}

async fn remove_emphasis(
    State(state): Shared,
    UrlPath((id, emphasis)): UrlPath<(String, String)>,
    Query(q): Query<VersionQuery>,
) -> ApiResult {
    mutate(&state, &id, q.version, |s| {
        let scene = s
            .script
            .scene_of_emphasis(&emphasis)
            .ok_or_else(|| ApiError::NotFound(format!("unknown emphasis {emphasis}")))?
            .id
            .clone();
        s.script = s
            .script
            .with_scene(&scene, |sc| sc.remove_emphasis(&emphasis))?;
        Ok(json!({}))
    })
    .await
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Position {
    Named(String),
    Index(usize),
}

#[derive(Deserialize)]
struct NewTransition {
    version: u64,
    /// `"opening"` or the index of the segment to insert before.
    position: Position,
    text: Option<String>,
}

async fn add_transition(
    State(state): Shared,
    UrlPath((id, scene)): UrlPath<(String, String)>,
    Json(p): Json<NewTransition>,
) -> ApiResult {
    let position = match p.position {
        Position::Named(n) if n == "opening" => TransitionPosition::Opening,
        Position::Named(n) => {
            return Err(ApiError::Invalid {
                kind: "InvalidPosition".into(),
                message: format!("unknown position {n:?}"),
            })
        }
        Position::Index(i) => TransitionPosition::TurningPoint(i),
    };
    mutate(&state, &id, p.version, |s| {
        s.script = insert_transition(&s.script, &scene, position, p.text.as_deref())?;
        Ok(json!({}))
    })
    .await
}

#[derive(Deserialize)]
struct Versioned {
    version: u64,
}

async fn narrate(
    State(state): Shared,
    UrlPath(id): UrlPath<String>,
    Json(p): Json<Versioned>,
) -> ApiResult {
    mutate_blocking(&state, &id, p.version, |st, s| {
        s.script = pipeline::narrate(&s.script, &s.notebook, st.bridge()).map_err(|e| match e {
            PipelineError::Llm(l) => ApiError::from(l),
            PipelineError::Script(x) => ApiError::from(x),
            other => ApiError::invalid(other),
        })?;
        Ok(json!({}))
    })
    .await
}

async fn make_question(
    State(state): Shared,
    UrlPath((id, segment)): UrlPath<(String, String)>,
    Json(p): Json<Versioned>,
) -> ApiResult {
    mutate_blocking(&state, &id, p.version, move |st, s| {
        let scene = s
            .script
            .scene_of_segment(&segment)
            .ok_or_else(|| ApiError::NotFound(format!("unknown segment {segment}")))?
            .id
            .clone();
        s.script = make_interactive(&s.script, &scene, &segment, st.bridge())?;
        Ok(json!({}))
    })
    .await
}

#[derive(Deserialize)]
struct Links {
    version: u64,
    emphasis_ids: Vec<String>,
}

async fn set_links(
    State(state): Shared,
    UrlPath((id, segment)): UrlPath<(String, String)>,
    Json(p): Json<Links>,
) -> ApiResult {
    mutate(&state, &id, p.version, |s| {
        let scene = s
            .script
            .scene_of_segment(&segment)
            .ok_or_else(|| ApiError::NotFound(format!("unknown segment {segment}")))?
            .id
            .clone();
        s.script = s
            .script
            .with_scene(&scene, |sc| sc.link_segment(&segment, &p.emphasis_ids))?;
        Ok(json!({}))
    })
    .await
}

#[derive(Deserialize)]
struct RenderRequest {
    #[serde(default = "full_scope")]
    scope: Scope,
}

fn full_scope() -> Scope {
    Scope::Full
}

/// Queues a render. Jobs of one session run one at a time, in order, on
/// the session state current when each starts.
async fn render(
    State(state): Shared,
    UrlPath(id): UrlPath<String>,
    Json(p): Json<RenderRequest>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let slot = state.slot(&id)?;
    let job_id = uuid::Uuid::new_v4().simple().to_string();
    let job = RenderJob {
        id: job_id.clone(),
        session_id: id.clone(),
        scope: p.scope,
        state: JobState::Queued,
        script_version: None,
        error: None,
        error_kind: None,
        artifact: None,
        dir: state.config.data_dir.join("jobs").join(&job_id),
    };
    let view = serde_json::to_value(&job).expect("job serializes");
    state
        .jobs
        .write()
        .expect("job map")
        .insert(job_id.clone(), Arc::new(Mutex::new(job)));
    let queue = slot.queue.get_or_init(|| {
        let (tx, rx) = mpsc::unbounded_channel();
        tokio::spawn(worker(state.clone(), slot.clone(), rx));
        tx
    });
    queue
        .send(job_id)
        .map_err(|_| ApiError::Internal("render queue closed".into()))?;
    Ok((StatusCode::ACCEPTED, Json(view)))
}

async fn worker(
    state: Arc<AppState>,
    slot: Arc<SessionSlot>,
    mut rx: mpsc::UnboundedReceiver<String>,
) {
    while let Some(job_id) = rx.recv().await {
        let Ok(job) = state.job(&job_id) else {
            continue;
        };
        let (scope, dir) = {
            let mut j = job.lock().expect("job");
            j.state = JobState::Running;
            (j.scope.clone(), j.dir.clone())
        };
        let session = slot.session.lock().await.clone();
        let version = session.version;
        let st = state.clone();
        let result = tokio::task::spawn_blocking(move || st.run_job(&session, &scope, &dir)).await;
        let mut j = job.lock().expect("job");
        j.script_version = Some(version);
        match result {
            Ok(Ok(artifact)) => {
                j.state = JobState::Done;
                j.artifact = Some(artifact);
            }
            Ok(Err(e)) => {
                tracing::warn!("render job {job_id} failed: {e}");
                j.state = JobState::Failed;
                j.error_kind = Some(error_kind(&e));
                j.error = Some(e.to_string());
            }
            Err(e) => {
                j.state = JobState::Failed;
                j.error_kind = Some("Panic".into());
                j.error = Some(e.to_string());
            }
        }
    }
}

async fn get_job(State(state): Shared, UrlPath(job): UrlPath<String>) -> ApiResult {
    let job = state.job(&job)?;
    let j = job.lock().expect("job").clone();
    Ok(Json(serde_json::to_value(&j).expect("job serializes")))
}

/// The finished job and its artifact format.
fn finished(state: &AppState, job: &str) -> Result<(PathBuf, String), ApiError> {
    let job = state.job(job)?;
    let j = job.lock().expect("job");
    match (&j.state, &j.artifact) {
        (JobState::Done, Some(a)) => Ok((j.dir.clone(), a.format.clone())),
        _ => Err(ApiError::NotFound(format!("job {} has no artifact", j.id))),
    }
}

async fn send_file(path: PathBuf, content_type: &'static str) -> Result<Response, ApiError> {
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::NotFound(format!("{} is missing", path.display())))?;
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

async fn artifact_video(
    State(state): Shared,
    UrlPath(job): UrlPath<String>,
) -> Result<Response, ApiError> {
    let (dir, format) = finished(&state, &job)?;
    if format != "mp4" {
        return Err(ApiError::NotFound(format!(
            "job {job} was rendered as an image sequence"
        )));
    }
    send_file(dir.join("video.mp4"), "video/mp4").await
}

async fn artifact_manifest(
    State(state): Shared,
    UrlPath(job): UrlPath<String>,
) -> Result<Response, ApiError> {
    let (dir, format) = finished(&state, &job)?;
    let path = if format == "mp4" {
        dir.join(MANIFEST_FILE)
    } else {
        dir.join("frames").join(MANIFEST_FILE)
    };
    send_file(path, "application/json").await
}

async fn artifact_audio(
    State(state): Shared,
    UrlPath(job): UrlPath<String>,
) -> Result<Response, ApiError> {
    let (dir, format) = finished(&state, &job)?;
    let path = if format == "mp4" {
        dir.join("video.wav")
    } else {
        dir.join("frames").join(AUDIO_FILE)
    };
    send_file(path, "audio/wav").await
}

async fn artifact_frame(
    State(state): Shared,
    UrlPath((job, n)): UrlPath<(String, u64)>,
) -> Result<Response, ApiError> {
    let (dir, format) = finished(&state, &job)?;
    if format != "frames" {
        return Err(ApiError::NotFound(format!(
            "job {job} was rendered as video"
        )));
    }
    send_file(dir.join("frames").join(frame_file_name(n)), "image/png").await
}
