//! JSON API over a live episode: state snapshots, instructions, resets and
//! a server-sent event stream of state changes.

use std::convert::Infallible;
use std::io::Cursor;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router as HttpRouter};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use futures::Stream;
use manip_core::grounding::Heatmap;
use manip_core::skills::SkillLabel;
use manip_sim::render::render;
use manip_sim::tasks::{sample_compound_episode, sample_episode, TaskSpec};
use serde::{Deserialize, Serialize};
use tokio::sync::{watch, Mutex};

use crate::config::{PipelineConfig, Router};
use crate::models::Models;
use crate::step::{Session, StepTrace};
use crate::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub valid: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub instruction: String,
    pub skill: Option<SkillLabel>,
    pub keypoint: Option<[usize; 2]>,
    pub executed: bool,
    pub success: Option<bool>,
    pub error: Option<String>,
}

impl From<&StepTrace> for LogEntry {
    fn from(t: &StepTrace) -> Self {
        Self {
            instruction: t.instruction.clone(),
            skill: t.skill,
            keypoint: t.keypoint,
            executed: t.executed,
            success: t.success,
            error: t.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Increments on every state change.
    pub version: u64,
    pub seed: u64,
    pub task: Option<TaskSpec>,
    pub width: u32,
    pub height: u32,
    /// Grounding-camera image, base64 PNG.
    pub image_png: String,
    pub depth: Option<DepthSummary>,
    pub log: Vec<LogEntry>,
}

/// A step trace with the heatmap replaced by a grayscale PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceView {
    #[serde(flatten)]
    pub trace: StepTrace,
    pub heatmap_png: Option<String>,
}

impl From<StepTrace> for TraceView {
    fn from(mut trace: StepTrace) -> Self {
        let heatmap_png = trace.heatmap.take().map(|h| heatmap_png(&h));
        Self { trace, heatmap_png }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionResponse {
    pub traces: Vec<TraceView>,
    pub state: Snapshot,
}

#[derive(Debug, Clone, Deserialize)]
pub struct InstructionRequest {
    pub text: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ResetRequest {
    pub seed: u64,
}

fn png_base64<P, C>(image: &image::ImageBuffer<P, C>) -> String
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut bytes = Vec::new();
    image
        .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    STANDARD.encode(bytes)
}

pub fn heatmap_png(h: &Heatmap) -> String {
    png_base64(&h.to_image())
}

struct Live {
    session: Session,
    seed: u64,
    version: u64,
}

impl Live {
    fn snapshot(&self) -> Snapshot {
        let frame = render(
            &self.session.state,
            &self.session.spec,
            self.session.spec.grounding(),
        );
        Snapshot {
            version: self.version,
            seed: self.seed,
            task: self.session.task.clone(),
            width: frame.image.width(),
            height: frame.image.height(),
            image_png: png_base64(&frame.image),
            depth: frame.depth.stats().map(|(min, max, mean)| DepthSummary {
                valid: frame.depth.valid_count(),
                min,
                max,
                mean,
            }),
            log: self.session.log.iter().map(LogEntry::from).collect(),
        }
    }
}

/// Shared service state. Mutations go through `live`; readers take the
/// latest published snapshot without locking the episode.
#[derive(Clone)]
pub struct AppState {
    models: Arc<Models>,
    router: Arc<Router>,
    config: Arc<PipelineConfig>,
    live: Arc<Mutex<Live>>,
    snapshots: watch::Sender<Arc<Snapshot>>,
}

pub fn new_session(config: &PipelineConfig, seed: u64) -> Result<Session, PipelineError> {
    let s = &config.scene;
    let ep = if s.compound {
        sample_compound_episode(s.tier, seed)?
    } else {
        sample_episode(s.skill, s.tier, seed)?
    };
    Ok(Session::new(ep.spec, ep.state, Some(ep.task)))
}

impl AppState {
    pub fn new(
        models: Models,
        router: Router,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        let seed = config.scene.seed;
        let live = Live {
            session: new_session(&config, seed)?,
            seed,
            version: 0,
        };
        let (snapshots, _) = watch::channel(Arc::new(live.snapshot()));
        Ok(Self {
            models: Arc::new(models),
            router: Arc::new(router),
            config: Arc::new(config),
            live: Arc::new(Mutex::new(live)),
            snapshots,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshots.borrow().clone()
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn get_state(State(app): State<AppState>) -> Json<Snapshot> {
    Json(app.snapshot().as_ref().clone())
}

async fn post_instruction(
    State(app): State<AppState>,
    Json(req): Json<InstructionRequest>,
) -> Result<Json<InstructionResponse>, ApiError> {
    if req.text.trim().is_empty() {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            "instruction is empty".into(),
        ));
    }
    let mut live = app.live.clone().lock_owned().await;
    let (models, router, config) = (app.models.clone(), app.router.clone(), app.config.clone());
    let (traces, snapshot) = tokio::task::spawn_blocking(move || {
        let traces = live
            .session
            .instruct(&req.text, &models, &router, &config, false);
        live.version += 1;
        (traces, live.snapshot())
    })
    .await
    .map_err(internal)?;
    app.snapshots.send_replace(Arc::new(snapshot.clone()));
    Ok(Json(InstructionResponse {
        traces: traces.into_iter().map(TraceView::from).collect(),
        state: snapshot,
    }))
}

async fn post_reset(
    State(app): State<AppState>,
    Json(req): Json<ResetRequest>,
) -> Result<Json<Snapshot>, ApiError> {
    let mut live = app.live.clone().lock_owned().await;
    let config = app.config.clone();
    let snapshot = tokio::task::spawn_blocking(move || -> Result<Snapshot, PipelineError> {
        live.session = new_session(&config, req.seed)?;
        live.seed = req.seed;
        live.version += 1;
        Ok(live.snapshot())
    })
    .await
    .map_err(internal)?
    .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    app.snapshots.send_replace(Arc::new(snapshot.clone()));
    Ok(Json(snapshot))
}

fn state_event(s: &Snapshot) -> Event {
    Event::default()
        .event("state")
        .id(s.version.to_string())
        .json_data(s)
        .expect("snapshot serialises")
}

async fn get_stream(
    State(app): State<AppState>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = app.snapshots.subscribe();
    let stream = futures::stream::unfold((rx, true), |(mut rx, first)| async move {
        if !first && rx.changed().await.is_err() {
            return None;
        }
        let event = state_event(&rx.borrow_and_update());
        Some((Ok(event), (rx, false)))
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

pub fn app(state: AppState) -> HttpRouter {
    HttpRouter::new()
        .route("/api/state", get(get_state))
        .route("/api/instruction", post(post_instruction))
        .route("/api/reset", post(post_reset))
        .route("/api/stream", get(get_stream))
        .with_state(state)
}

pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    axum::serve(listener, app(state)).await
}
