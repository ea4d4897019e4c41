//! HTTP/JSON routes over the store and the live sessions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use atb_core::evalsim::{self, CorrectnessReport};
use atb_core::session::{Session, SessionError, Transcript};
use atb_core::{Domain, KnowledgeBase, LayoutTree, Phase, TeacherMessage, TutorState};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};
use thiserror::Error;

use crate::store::{Store, StoreError, TranscriptLog, TutorDoc, TUTOR_SCHEMA};

pub const DEFAULT_EVAL_COUNT: usize = 10;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("no such {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error("{0}")]
    Conflict(String),
    #[error("{message}")]
    Unprocessable {
        message: String,
        fields: Vec<String>,
    },
    #[error(transparent)]
    Session(SessionError),
    #[error("storage failure: {0}")]
    Store(#[from] StoreError),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, body) = match &self {
            ApiError::NotFound { .. } => (StatusCode::NOT_FOUND, json!({ "error": message })),
            ApiError::Store(StoreError::NoTutor(_)) => {
                (StatusCode::NOT_FOUND, json!({ "error": message }))
            }
            ApiError::Conflict(_) => (StatusCode::CONFLICT, json!({ "error": message })),
            ApiError::Unprocessable { fields, .. } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": message, "fields": fields }),
            ),
            ApiError::Session(SessionError::Protocol {
                phase,
                got,
                expected,
            }) => (
                StatusCode::CONFLICT,
                json!({ "error": message, "phase": phase, "got": got, "expected": expected }),
            ),
            ApiError::Session(_) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": message }),
            ),
            ApiError::Store(_) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({ "error": message }),
            ),
        };
        (status, Json(body)).into_response()
    }
}

fn unprocessable(message: impl Into<String>) -> ApiError {
    ApiError::Unprocessable {
        message: message.into(),
        fields: Vec::new(),
    }
}

struct Live {
    tutor: String,
    session: Session,
    log: TranscriptLog,
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<String, Arc<tokio::sync::Mutex<Live>>>,
    by_tutor: HashMap<String, String>,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    registry: Arc<Mutex<Registry>>,
    /// Serializes tutor document read-modify-write cycles.
    docs: Arc<Mutex<()>>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        AppState {
            store: Arc::new(store),
            registry: Arc::default(),
            docs: Arc::default(),
        }
    }

    fn live_session_of(&self, tutor: &str) -> Option<String> {
        self.registry
            .lock()
            .expect("registry lock")
            .by_tutor
            .get(tutor)
            .cloned()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/tutors", post(create_tutor))
        .route(
            "/tutors/{id}",
            get(get_tutor).put(update_tutor).delete(delete_tutor),
        )
        .route("/tutors/{id}/sessions", post(open_session))
        .route("/tutors/{id}/evaluate", post(evaluate))
        .route("/tutors/{id}/transcripts", get(list_transcripts))
        .route("/tutors/{id}/transcripts/{session}", get(get_transcript))
        .route("/sessions/{id}", get(get_session).delete(close_session))
        .route("/sessions/{id}/messages", post(post_message))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct CreateTutor {
    #[serde(default)]
    pub name: String,
    pub layout: LayoutTree,
    /// Agent document; a fresh agent when absent.
    #[serde(default)]
    pub agent: Option<JsonValue>,
}

#[derive(Debug, Deserialize)]
pub struct UpdateTutor {
    pub version: u64,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub layout: Option<LayoutTree>,
    #[serde(default)]
    pub agent: Option<JsonValue>,
}

#[derive(Debug, Serialize)]
pub struct TutorView {
    #[serde(flatten)]
    pub doc: TutorDoc,
    pub agent: JsonValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub live_session: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    pub session: String,
    pub tutor: String,
    pub phase: Phase,
    pub legal: &'static [&'static str],
    pub state: TutorState,
    pub layout: LayoutTree,
    pub agent: JsonValue,
    pub events: usize,
}

#[derive(Debug, Deserialize)]
pub struct EvaluateRequest {
    pub domain: String,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn new_id(prefix: &str) -> String {
    format!("{prefix}{:016x}", rand::random::<u64>())
}

fn parse_agent(doc: Option<JsonValue>) -> Result<KnowledgeBase, ApiError> {
    match doc {
        None => Ok(KnowledgeBase::new()),
        Some(v) => KnowledgeBase::from_json(&v.to_string())
            .map_err(|e| unprocessable(format!("agent: {e}"))),
    }
}

fn agent_json(kb: &KnowledgeBase) -> JsonValue {
    serde_json::from_str(&kb.to_json()).expect("agent document is JSON")
}

/// The layout must be valid and keep every field the agent refers to.
fn check_consistency(layout: &LayoutTree, kb: &KnowledgeBase) -> Result<(), ApiError> {
    layout
        .validate()
        .map_err(|e| unprocessable(format!("layout: {e}")))?;
    let names = layout.input_names();
    let missing: Vec<String> = kb
        .field_references()
        .into_iter()
        .filter(|f| !names.contains(f))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(ApiError::Unprocessable {
            message: format!(
                "the agent refers to fields missing from the layout: {}",
                missing.join(", ")
            ),
            fields: missing,
        })
    }
}

fn view(state: &AppState, id: &str) -> Result<TutorView, ApiError> {
    let doc = state.store.read_tutor(id)?;
    let agent = serde_json::from_str(&state.store.read_agent_text(id)?).map_err(|e| {
        StoreError::Corrupt {
            path: format!("{id}/agent.json"),
            reason: e.to_string(),
        }
    })?;
    Ok(TutorView {
        doc,
        agent,
        live_session: state.live_session_of(id),
    })
}

fn require_tutor(state: &AppState, id: &str) -> Result<(), ApiError> {
    if state.store.exists(id) {
        Ok(())
    } else {
        Err(ApiError::NotFound {
            kind: "tutor",
            id: id.to_owned(),
        })
    }
}

async fn create_tutor(
    State(state): State<AppState>,
    Json(req): Json<CreateTutor>,
) -> Result<impl IntoResponse, ApiError> {
    let kb = parse_agent(req.agent)?;
    check_consistency(&req.layout, &kb)?;
    let doc = TutorDoc {
        schema: TUTOR_SCHEMA,
        id: new_id("t-"),
        version: 1,
        name: req.name,
        layout: req.layout,
    };
    state.store.create(&doc, &kb)?;
    Ok((StatusCode::CREATED, Json(view(&state, &doc.id)?)))
}

async fn get_tutor(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<TutorView>, ApiError> {
    require_tutor(&state, &id)?;
    Ok(Json(view(&state, &id)?))
}

async fn update_tutor(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<UpdateTutor>,
) -> Result<Json<TutorView>, ApiError> {
    require_tutor(&state, &id)?;
    {
        let _guard = state.docs.lock().expect("docs lock");
        if let Some(session) = state.live_session_of(&id) {
            return Err(ApiError::Conflict(format!(
                "session `{session}` holds this tutor"
            )));
        }
        let mut doc = state.store.read_tutor(&id)?;
        if doc.version != req.version {
            return Err(ApiError::Conflict(format!(
                "version {} is stale; current version is {}",
                req.version, doc.version
            )));
        }
        let kb = match req.agent {
            Some(a) => Some(parse_agent(Some(a))?),
            None => None,
        };
        let layout = req.layout.unwrap_or_else(|| doc.layout.clone());
        let current_kb;
        let effective = match &kb {
            Some(k) => k,
            None => {
                current_kb = state.store.read_agent(&id)?;
                &current_kb
            }
        };
        check_consistency(&layout, effective)?;
        doc.layout = layout;
        if let Some(name) = req.name {
            doc.name = name;
        }
        doc.version += 1;
        if let Some(k) = &kb {
            state.store.write_agent(&id, k)?;
        }
        state.store.write_tutor(&doc)?;
    }
    Ok(Json(view(&state, &id)?))
}

async fn delete_tutor(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    require_tutor(&state, &id)?;
    let _guard = state.docs.lock().expect("docs lock");
    if let Some(session) = state.live_session_of(&id) {
        return Err(ApiError::Conflict(format!(
            "session `{session}` holds this tutor"
        )));
    }
    state.store.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn open_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    require_tutor(&state, &id)?;
    let _guard = state.docs.lock().expect("docs lock");
    let mut registry = state.registry.lock().expect("registry lock");
    if let Some(existing) = registry.by_tutor.get(&id) {
        return Err(ApiError::Conflict(format!(
            "session `{existing}` already holds this tutor's agent"
        )));
    }
    let doc = state.store.read_tutor(&id)?;
    let kb = state.store.read_agent(&id)?;
    let session = Session::new(doc.layout, kb);
    let sid = new_id("s-");
    let log = state
        .store
        .begin_transcript(&id, &sid, session.transcript())?;
    let body = json!({ "session": sid, "tutor": id, "phase": session.phase(), "legal": session.phase().legal_messages() });
    registry.sessions.insert(
        sid.clone(),
        Arc::new(tokio::sync::Mutex::new(Live {
            tutor: id.clone(),
            session,
            log,
        })),
    );
    registry.by_tutor.insert(id, sid);
    Ok((StatusCode::CREATED, Json(body)))
}

fn live(state: &AppState, sid: &str) -> Result<Arc<tokio::sync::Mutex<Live>>, ApiError> {
    state
        .registry
        .lock()
        .expect("registry lock")
        .sessions
        .get(sid)
        .cloned()
        .ok_or_else(|| ApiError::NotFound {
            kind: "session",
            id: sid.to_owned(),
        })
}

fn forget(state: &AppState, sid: &str, tutor: &str) {
    let mut registry = state.registry.lock().expect("registry lock");
    registry.sessions.remove(sid);
    if registry.by_tutor.get(tutor).is_some_and(|s| s == sid) {
        registry.by_tutor.remove(tutor);
    }
}

async fn get_session(
    State(state): State<AppState>,
    Path(sid): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    let handle = live(&state, &sid)?;
    let live = handle.lock().await;
    let s = &live.session;
    Ok(Json(SessionView {
        session: sid,
        tutor: live.tutor.clone(),
        phase: s.phase(),
        legal: s.phase().legal_messages(),
        state: s.tutor_state().clone(),
        layout: s.layout().clone(),
        agent: agent_json(s.kb()),
        events: s.transcript().events.len(),
    }))
}

/// Applies one teacher message; the reply is sent only after both transcript
/// events are on disk.
async fn post_message(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    Json(msg): Json<TeacherMessage>,
) -> Result<Response, ApiError> {
    let handle = live(&state, &sid)?;
    let mut live = handle.lock().await;
    let before = live.session.transcript().events.len();
    let reply = live.session.step(msg).map_err(ApiError::Session)?;
    let lines: Vec<String> = live.session.transcript().events[before..]
        .iter()
        .map(Transcript::event_line)
        .collect();
    if let Err(e) = live.log.append(&lines) {
        // The in-memory session is now ahead of its log; drop it so a restart
        // recovers the last acknowledged state.
        let tutor = live.tutor.clone();
        drop(live);
        forget(&state, &sid, &tutor);
        return Err(ApiError::Store(StoreError::Io(e)));
    }
    Ok(Json(reply).into_response())
}

async fn close_session(
    State(state): State<AppState>,
    Path(sid): Path<String>,
) -> Result<Json<TutorView>, ApiError> {
    let handle = live(&state, &sid)?;
    let live = handle.lock().await;
    let tutor = live.tutor.clone();
    {
        let _guard = state.docs.lock().expect("docs lock");
        let mut doc = state.store.read_tutor(&tutor)?;
        state.store.write_agent(&tutor, live.session.kb())?;
        if &doc.layout != live.session.layout() {
            doc.layout = live.session.layout().clone();
        }
        doc.version += 1;
        state.store.write_tutor(&doc)?;
        state.store.close_transcript(&tutor, &sid)?;
    }
    drop(live);
    forget(&state, &sid, &tutor);
    Ok(Json(view(&state, &tutor)?))
}

async fn evaluate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<EvaluateRequest>,
) -> Result<Json<CorrectnessReport>, ApiError> {
    require_tutor(&state, &id)?;
    let domain: Domain = req.domain.parse().map_err(|e: String| unprocessable(e))?;
    let count = req.count.unwrap_or(DEFAULT_EVAL_COUNT);
    if count == 0 {
        return Err(unprocessable("count must be at least 1"));
    }
    let doc = state.store.read_tutor(&id)?;
    let kb = state.store.read_agent(&id)?;
    let problems = evalsim::generate(domain, count, req.seed.unwrap_or(0));
    Ok(Json(evalsim::evaluate(&kb, &doc.layout, &problems)))
}

async fn list_transcripts(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    require_tutor(&state, &id)?;
    Ok(Json(json!({ "tutor": id, "transcripts": state.store.transcripts(&id)? })).into_response())
}

async fn get_transcript(
    State(state): State<AppState>,
    Path((id, session)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    require_tutor(&state, &id)?;
    match state.store.transcript_text(&id, &session)? {
        Some(text) => Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response()),
        None => Err(ApiError::NotFound {
            kind: "transcript",
            id: session,
        }),
    }
}
