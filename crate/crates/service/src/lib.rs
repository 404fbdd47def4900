//! HTTP API over a thread set and its annotation log.
//!
//! Reads are served from an immutable snapshot swapped in after each
//! mutation; mutations go through one writer that appends to the log.

mod error;
pub mod views;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::{DateTime, NaiveDate, Utc};
use serde::Deserialize;
use tokio::net::TcpListener;

use rumour_core::annostore::{AnnotationError, AnnotationStore, StoryRef};
use rumour_core::report::ReportError;
use rumour_core::threads::{load_threads, ThreadError};
use rumour_core::{build_report, AnnotationState, DatasetBundle, Label, ReportParams, ThreadSet};

pub use error::{ApiError, ApiResult};
use error::ok;
use views::JudgmentResponse;

pub const SCHEMA_VERSION: &str = "1";
pub const SCHEMA_HEADER: &str = "x-schema-version";
pub const TOKEN_HEADER: &str = "x-annotator-token";
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Threads(#[from] ThreadError),
    #[error(transparent)]
    Annotations(#[from] AnnotationError),
    #[error("annotation log judges unknown thread {0}")]
    UnknownThread(String),
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub threads_dir: PathBuf,
    pub log_path: PathBuf,
    /// Token → annotator id. Empty means the token itself is the id.
    pub tokens: BTreeMap<String, String>,
    pub report: ReportParams,
}

/// Response replayed for a repeated idempotency key.
#[derive(Clone)]
struct Stored {
    request: Bytes,
    status: StatusCode,
    body: Bytes,
}

struct Writer {
    store: AnnotationStore,
    replies: HashMap<(String, String, String), Stored>,
}

struct Shared {
    threads: Arc<ThreadSet>,
    days: BTreeMap<NaiveDate, Vec<String>>,
    snapshot: ArcSwap<AnnotationState>,
    writer: Mutex<Writer>,
    tokens: BTreeMap<String, String>,
    report: ReportParams,
    clock: Clock,
}

/// A loaded dataset ready to be served.
#[derive(Clone)]
pub struct App {
    shared: Arc<Shared>,
}

impl App {
    /// Loads the thread documents and replays (or creates) the log.
    pub fn open(config: &ServiceConfig) -> Result<Self, StartError> {
        let threads = if config.threads_dir.exists() {
            load_threads(&config.threads_dir)?
        } else {
            ThreadSet::new()
        };
        let ids: BTreeSet<String> = threads.keys().cloned().collect();
        let store = AnnotationStore::open(&config.log_path, Some(ids))?;
        if let Some(j) = store.state().judgments().find(|j| !threads.contains_key(&j.thread_id)) {
            return Err(StartError::UnknownThread(j.thread_id.clone()));
        }
        Ok(Self::from_parts(threads, store, config.tokens.clone(), config.report.clone()))
    }

    /// Serves an in-memory dataset; nothing is written to disk.
    pub fn in_memory(threads: ThreadSet, state: AnnotationState) -> Self {
        let mut state = state;
        state.set_threads(threads.keys().cloned());
        Self::from_parts(threads, AnnotationStore::in_memory(state), BTreeMap::new(), ReportParams::default())
    }

    fn from_parts(
        threads: ThreadSet,
        store: AnnotationStore,
        tokens: BTreeMap<String, String>,
        report: ReportParams,
    ) -> Self {
        let days = views::day_index(&threads);
        let snapshot = ArcSwap::from_pointee(store.state().clone());
        Self {
            shared: Arc::new(Shared {
                threads: Arc::new(threads),
                days,
                snapshot,
                writer: Mutex::new(Writer {
                    store,
                    replies: HashMap::new(),
                }),
                tokens,
                report,
                clock: Arc::new(Utc::now),
            }),
        }
    }

    /// Replaces the timestamp source for judgments. Must be called before
    /// the app is cloned.
    pub fn with_clock(mut self, clock: Clock) -> Self {
        Arc::get_mut(&mut self.shared)
            .expect("with_clock before the app is shared")
            .clock = clock;
        self
    }

    pub fn state(&self) -> Arc<AnnotationState> {
        self.shared.snapshot.load_full()
    }

    pub fn threads(&self) -> &ThreadSet {
        &self.shared.threads
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/api/days", get(list_days))
            .route("/api/days/{date}/threads", get(day_threads))
            .route("/api/threads/{id}", get(thread_detail))
            .route("/api/threads/{id}/judgment", post(post_judgment))
            .route("/api/threads/{id}/move", post(post_move))
            .route("/api/stories", get(list_stories))
            .route("/api/stories/{id}/rename", post(post_rename))
            .route("/api/review", get(review))
            .route("/api/export", get(export))
            .route("/api/report", get(report))
            .fallback(not_found)
            .layer(axum::middleware::map_response(stamp_schema))
            .with_state(self.clone())
    }
}

/// Runs until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    app: App,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app.router())
        .with_graceful_shutdown(shutdown)
        .await
}

async fn stamp_schema(mut resp: Response) -> Response {
    resp.headers_mut()
        .insert(SCHEMA_HEADER, HeaderValue::from_static(SCHEMA_VERSION));
    resp
}

async fn not_found(method: Method, uri: Uri) -> ApiError {
    ApiError::not_found("unknown_route", format!("no route for {method} {}", uri.path()))
}

fn parse_date(raw: &str) -> ApiResult<NaiveDate> {
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map_err(|_| ApiError::bad_request("bad_date", format!("expected YYYY-MM-DD, got {raw:?}")))
}

async fn list_days(State(app): State<App>) -> Response {
    let s = &app.shared;
    ok(&views::days(&s.days, &s.snapshot.load()))
}

async fn day_threads(State(app): State<App>, UrlPath(date): UrlPath<String>) -> ApiResult<Response> {
    let date = parse_date(&date)?;
    let s = &app.shared;
    let timeline = views::timeline(&s.threads, &s.days, &s.snapshot.load(), date)
        .ok_or_else(|| ApiError::not_found("unknown_date", format!("no threads on {date}")))?;
    Ok(ok(&timeline))
}

async fn thread_detail(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let thread = app
        .shared
        .threads
        .get(&id)
        .ok_or_else(|| ApiError::not_found("unknown_thread", format!("unknown thread {id}")))?;
    Ok((
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        thread.to_json(),
    )
        .into_response())
}

async fn list_stories(State(app): State<App>) -> Response {
    ok(&app.shared.snapshot.load().snapshot().stories)
}

async fn review(State(app): State<App>) -> Response {
    let s = &app.shared;
    ok(&views::review(&s.threads, &s.snapshot.load()))
}

async fn export(State(app): State<App>) -> Response {
    let s = &app.shared;
    let bundle = DatasetBundle::new(&s.threads, &s.snapshot.load());
    (
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        bundle.to_json(),
    )
        .into_response()
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    trim: Option<f64>,
    session_gap: Option<i64>,
    /// Comma-separated retweet thresholds.
    thresholds: Option<String>,
}

async fn report(State(app): State<App>, query: Result<Query<ReportQuery>, axum::extract::rejection::QueryRejection>) -> ApiResult<Response> {
    let Query(q) = query.map_err(|e| ApiError::bad_request("bad_query", e.body_text()))?;
    let mut params = app.shared.report.clone();
    if let Some(t) = q.trim {
        params.trim = t;
    }
    if let Some(g) = q.session_gap {
        params.session_gap_s = g;
    }
    if let Some(raw) = q.thresholds.filter(|r| !r.trim().is_empty()) {
        params.thresholds = raw
            .split(',')
            .map(|t| t.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ApiError::bad_request("bad_query", format!("bad thresholds {raw:?}")))?;
    }
    let threads = Arc::clone(&app.shared.threads);
    let state = app.shared.snapshot.load_full();
    // Off the request workers so other calls stay responsive.
    let built = tokio::task::spawn_blocking(move || build_report(&threads, &state, &params))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    match built {
        Ok(bundle) => Ok(ok(&bundle)),
        Err(e @ (ReportError::BadTrim(_) | ReportError::Sample(_))) => {
            Err(ApiError::bad_request("bad_query", e.to_string()))
        }
        Err(e) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "report_unavailable", e.to_string())),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JudgmentBody {
    label: Label,
    #[serde(default)]
    story: Option<StoryRef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MoveBody {
    story_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RenameBody {
    name: String,
}

fn annotator(app: &App, headers: &HeaderMap) -> ApiResult<String> {
    let unauthorised = |code, msg: &str| ApiError::new(StatusCode::UNAUTHORIZED, code, msg);
    let token = headers
        .get(TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| unauthorised("missing_token", "x-annotator-token header required"))?;
    if app.shared.tokens.is_empty() {
        return Ok(token.to_string());
    }
    app.shared
        .tokens
        .get(token)
        .cloned()
        .ok_or_else(|| unauthorised("unknown_token", "token not recognised"))
}

/// Common path for every mutation: authenticate, parse, replay a stored
/// reply for a repeated idempotency key, otherwise run `op` under the
/// writer lock and publish the new snapshot.
async fn mutate<B, F>(app: App, route: String, headers: HeaderMap, body: Bytes, op: F) -> ApiResult<Response>
where
    B: for<'de> Deserialize<'de> + Send + 'static,
    F: FnOnce(&mut AnnotationStore, B, &str, DateTime<Utc>) -> ApiResult<(StatusCode, Vec<u8>)>
        + Send
        + 'static,
{
    let who = annotator(&app, &headers)?;
    let parsed: B = serde_json::from_slice(&body)?;
    let key = match headers.get(IDEMPOTENCY_HEADER) {
        None => None,
        Some(v) => Some(
            v.to_str()
                .ok()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| ApiError::bad_request("bad_idempotency_key", "idempotency-key must be visible ASCII"))?
                .to_string(),
        ),
    };
    tokio::task::spawn_blocking(move || {
        let shared = &app.shared;
        let mut w = shared.writer.lock().unwrap_or_else(|p| p.into_inner());
        let cache_key = key.map(|k| (who.clone(), route, k));
        if let Some(prev) = cache_key.as_ref().and_then(|k| w.replies.get(k)) {
            if prev.request != body {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "idempotency_key_reused",
                    "idempotency key already used with a different body",
                ));
            }
            return Ok(replay(prev));
        }
        let (status, out) = op(&mut w.store, parsed, &who, (shared.clock)())?;
        shared.snapshot.store(Arc::new(w.store.state().clone()));
        let stored = Stored {
            request: body,
            status,
            body: Bytes::from(out),
        };
        let resp = replay(&stored);
        if let Some(k) = cache_key {
            w.replies.insert(k, stored);
        }
        Ok(resp)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

fn replay(stored: &Stored) -> Response {
    (
        stored.status,
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        stored.body.clone(),
    )
        .into_response()
}

fn encode<T: serde::Serialize>(value: &T) -> ApiResult<(StatusCode, Vec<u8>)> {
    serde_json::to_vec(value)
        .map(|b| (StatusCode::OK, b))
        .map_err(|e| ApiError::internal(e.to_string()))
}

async fn post_judgment(
    State(app): State<App>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let route = format!("judgment:{id}");
    mutate(app, route, headers, body, move |store, b: JudgmentBody, who, at| {
        let judgment = store
            .record_judgment(&id, b.label, b.story, who, at)
            .map_err(|e| ApiError::from_annotation(e, false))?;
        let story = judgment
            .story_id
            .as_deref()
            .and_then(|s| store.state().story(s))
            .cloned();
        encode(&JudgmentResponse { judgment, story })
    })
    .await
}

async fn post_move(
    State(app): State<App>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let route = format!("move:{id}");
    mutate(app, route, headers, body, move |store, b: MoveBody, who, at| {
        let judgment = store
            .move_thread(&id, &b.story_id, who, at)
            .map_err(|e| ApiError::from_annotation(e, false))?;
        let story = store.state().story(&b.story_id).cloned();
        encode(&JudgmentResponse { judgment, story })
    })
    .await
}

async fn post_rename(
    State(app): State<App>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let route = format!("rename:{id}");
    mutate(app, route, headers, body, move |store, b: RenameBody, who, at| {
        let story = store
            .rename_story(&id, &b.name, who, at)
            .map_err(|e| ApiError::from_annotation(e, true))?;
        encode(&story)
    })
    .await
}
