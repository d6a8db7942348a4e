//! HTTP surface. Routes are grouped by architectural layer:
//!
//! | prefix                 | layer / sublayer          |
//! |------------------------|---------------------------|
//! | `/data/projects/**`    | Data / Trade (CRUD)       |
//! | `/data/indices/**`     | Data / Indices            |
//! | `/technique/models/**` | Technique / Models        |
//! | `/lifecycle/{id}` GET  | Technique / Function      |
//! | `/lifecycle/**` POST   | Action / Applicative      |
//! | `/action/indicators/**`| Action / Indicators       |
//! | `/feed/**`, `/health`  | Presentation / Interface  |
//!
//! Writes accept an `If-Match: <revision>` header for optimistic concurrency;
//! lifecycle events need an `X-Role` header.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use pmdss_core::{EacVariant, Money, ProgressSnapshot, ProjectId, Role, TimePoint};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::api::{EventRequest, Service};
use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::store::FeedEvent;

pub const ROLE_HEADER: &str = "x-role";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Data,
    Technique,
    Action,
    Presentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sublayer {
    Trade,
    Indices,
    Function,
    Models,
    Applicative,
    Indicators,
    Interface,
}

impl Sublayer {
    pub fn layer(self) -> Layer {
        match self {
            Sublayer::Trade | Sublayer::Indices => Layer::Data,
            Sublayer::Function | Sublayer::Models => Layer::Technique,
            Sublayer::Applicative | Sublayer::Indicators => Layer::Action,
            Sublayer::Interface => Layer::Presentation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayeredRoute {
    pub layer: Layer,
    pub sublayer: Sublayer,
    pub method: &'static str,
    pub path: &'static str,
}

const fn route(sublayer: Sublayer, method: &'static str, path: &'static str) -> LayeredRoute {
    let layer = match sublayer {
        Sublayer::Trade | Sublayer::Indices => Layer::Data,
        Sublayer::Function | Sublayer::Models => Layer::Technique,
        Sublayer::Applicative | Sublayer::Indicators => Layer::Action,
        Sublayer::Interface => Layer::Presentation,
    };
    LayeredRoute {
        layer,
        sublayer,
        method,
        path,
    }
}

/// Every endpoint the router exposes.
pub const ROUTES: &[LayeredRoute] = &[
    route(Sublayer::Trade, "GET", "/data/projects"),
    route(Sublayer::Trade, "POST", "/data/projects"),
    route(Sublayer::Trade, "GET", "/data/projects/{id}"),
    route(Sublayer::Trade, "DELETE", "/data/projects/{id}"),
    route(Sublayer::Trade, "GET", "/data/projects/{id}/baseline"),
    route(Sublayer::Trade, "PUT", "/data/projects/{id}/baseline"),
    route(Sublayer::Trade, "DELETE", "/data/projects/{id}/baseline"),
    route(Sublayer::Trade, "GET", "/data/projects/{id}/snapshots"),
    route(Sublayer::Trade, "POST", "/data/projects/{id}/snapshots"),
    route(
        Sublayer::Trade,
        "GET",
        "/data/projects/{id}/snapshots/{date}",
    ),
    route(Sublayer::Indices, "GET", "/data/indices/{id}"),
    route(Sublayer::Models, "GET", "/technique/models/{id}/eac"),
    route(Sublayer::Function, "GET", "/lifecycle/{id}"),
    route(Sublayer::Applicative, "POST", "/lifecycle/{id}/events"),
    route(Sublayer::Indicators, "GET", "/action/indicators/{id}"),
    route(Sublayer::Interface, "GET", "/feed/{id}"),
    route(Sublayer::Interface, "GET", "/feed/{id}/stream"),
    route(Sublayer::Interface, "GET", "/health"),
    route(Sublayer::Interface, "GET", "/routes"),
];

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    use ServiceError::*;
    match e {
        ValidationFailed(_) => StatusCode::BAD_REQUEST,
        AlreadyExists(_) | PhaseViolation(_) | IllegalTransition { .. } | TerminalState(_) => {
            StatusCode::CONFLICT
        }
        UnknownProject(_) | NotFound(_) | NoBaseline | NoSnapshot => StatusCode::NOT_FOUND,
        ConflictingRevision { .. } => StatusCode::PRECONDITION_FAILED,
        MethodNotAllowed(_) => StatusCode::METHOD_NOT_ALLOWED,
        MissingRole => StatusCode::UNAUTHORIZED,
        Unauthorized { .. } => StatusCode::FORBIDDEN,
        Evm(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Io(_) | Corrupt { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            tracing::error!("{}", self.0);
        }
        let body = ErrorBody {
            error: self.0.code().to_owned(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
struct AppState {
    svc: Arc<Service>,
}

/// Runs `f` on the blocking pool; store writes fsync.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
{
    let svc = state.svc.clone();
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError(ServiceError::Io(std::io::Error::other(e))))?
        .map_err(ApiError)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::ValidationFailed(e.to_string()))
}

fn expected_revision(headers: &HeaderMap) -> Result<Option<u64>, ServiceError> {
    let Some(v) = headers.get(axum::http::header::IF_MATCH) else {
        return Ok(None);
    };
    v.to_str()
        .ok()
        .map(|s| s.trim().trim_matches('"'))
        .and_then(|s| s.parse().ok())
        .map(Some)
        .ok_or_else(|| ServiceError::ValidationFailed("If-Match must be a revision number".into()))
}

fn role(headers: &HeaderMap) -> Result<Option<Role>, ServiceError> {
    headers
        .get(ROLE_HEADER)
        .map(|v| {
            v.to_str()
                .map_err(|_| ServiceError::ValidationFailed("role header is not text".into()))?
                .parse::<Role>()
                .map_err(ServiceError::ValidationFailed)
        })
        .transpose()
}

fn query_param<T: std::str::FromStr>(
    q: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, ServiceError> {
    q.get(key)
        .map(|v| {
            v.parse().map_err(|_| {
                ServiceError::ValidationFailed(format!("query parameter `{key}` is invalid: `{v}`"))
            })
        })
        .transpose()
}

fn flag(q: &HashMap<String, String>, key: &str) -> Result<bool, ServiceError> {
    Ok(query_param::<bool>(q, key)?.unwrap_or(false))
}

pub fn router(svc: Arc<Service>) -> Router {
    let state = AppState { svc };
    Router::new()
        .route("/health", get(health))
        .route("/routes", get(routes))
        .route("/data/projects", get(list_projects).post(create_project))
        .route(
            "/data/projects/{id}",
            get(get_project).delete(delete_project),
        )
        .route(
            "/data/projects/{id}/baseline",
            get(get_baseline).put(put_baseline).delete(delete_baseline),
        )
        .route(
            "/data/projects/{id}/snapshots",
            get(list_snapshots).post(post_snapshot),
        )
        .route(
            "/data/projects/{id}/snapshots/{date}",
            get(get_snapshot)
                .put(immutable_snapshot)
                .patch(immutable_snapshot)
                .delete(immutable_snapshot),
        )
        .route("/data/indices/{id}", get(indices))
        .route("/technique/models/{id}/eac", get(model))
        .route("/action/indicators/{id}", get(indicators))
        .route("/lifecycle/{id}", get(lifecycle))
        .route("/lifecycle/{id}/events", post(lifecycle_event))
        .route("/feed/{id}", get(feed_poll))
        .route("/feed/{id}/stream", get(feed_stream))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn routes() -> Json<&'static [LayeredRoute]> {
    Json(ROUTES)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    project_id: ProjectId,
}

async fn list_projects(State(s): State<AppState>) -> Json<Vec<ProjectId>> {
    Json(s.svc.list_projects())
}

async fn create_project(State(s): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateProject = parse_body(&body)?;
    let stored = blocking(&s, move |svc| svc.create_project(req.project_id)).await?;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn get_project(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.svc.get_project(&id)?))
}

async fn delete_project(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
) -> ApiResult<StatusCode> {
    blocking(&s, move |svc| svc.delete_project(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_baseline(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.svc.get_baseline(&id)?))
}

async fn put_baseline(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let baseline = parse_body(&body)?;
    let rebaseline = flag(&q, "rebaseline")?;
    let expected = expected_revision(&headers)?;
    let receipt = blocking(&s, move |svc| {
        svc.put_baseline(&id, baseline, expected, rebaseline)
    })
    .await?;
    Ok(Json(receipt))
}

async fn delete_baseline(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let expected = expected_revision(&headers)?;
    let stored = blocking(&s, move |svc| svc.delete_baseline(&id, expected)).await?;
    Ok(Json(stored))
}

async fn list_snapshots(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.svc.list_snapshots(&id)?))
}

async fn post_snapshot(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let snapshot: ProgressSnapshot = parse_body(&body)?;
    let expected = expected_revision(&headers)?;
    let receipt = blocking(&s, move |svc| svc.record_snapshot(&id, snapshot, expected)).await?;
    Ok((StatusCode::CREATED, Json(receipt)))
}

async fn get_snapshot(
    State(s): State<AppState>,
    Path((id, date)): Path<(ProjectId, i64)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.svc.get_snapshot(&id, TimePoint(date))?))
}

async fn immutable_snapshot() -> ApiError {
    ApiError(ServiceError::MethodNotAllowed(
        "snapshots are immutable once recorded".into(),
    ))
}

async fn indices(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let status_date = query_param::<i64>(&q, "status_date")?.map(TimePoint);
    Ok(Json(s.svc.indices(&id, status_date)?))
}

async fn model(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let variant = q
        .get("variant")
        .ok_or_else(|| {
            ServiceError::ValidationFailed("query parameter `variant` is required".into())
        })?
        .parse::<EacVariant>()
        .map_err(ServiceError::ValidationFailed)?;
    let new_etc = query_param::<Money>(&q, "new_etc")?;
    Ok(Json(s.svc.model(&id, variant, new_etc)?))
}

async fn indicators(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.svc.indicators(&id)?))
}

async fn lifecycle(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.svc.lifecycle(&id)?))
}

async fn lifecycle_event(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let request: EventRequest = parse_body(&body)?;
    let role = role(&headers)?;
    let expected = expected_revision(&headers)?;
    let view = blocking(&s, move |svc| svc.apply_event(&id, role, request, expected)).await?;
    Ok(Json(view))
}

fn from_sequence(q: &HashMap<String, String>, headers: &HeaderMap) -> Result<u64, ServiceError> {
    // a reconnecting EventSource sends the last id it saw
    if let Some(last) = headers.get("last-event-id").and_then(|v| v.to_str().ok()) {
        if let Ok(n) = last.trim().parse() {
            return Ok(n);
        }
    }
    Ok(query_param(q, "from")?.unwrap_or(0))
}

async fn feed_poll(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let from = from_sequence(&q, &headers)?;
    Ok(Json(s.svc.feed(&id, from)?))
}

struct FeedCursor {
    svc: Arc<Service>,
    id: ProjectId,
    queue: VecDeque<FeedEvent>,
    rx: broadcast::Receiver<FeedEvent>,
    last: u64,
}

fn sse_event(ev: &FeedEvent) -> Event {
    let kind = serde_json::to_value(ev.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default();
    Event::default()
        .id(ev.sequence.to_string())
        .event(kind)
        .json_data(ev)
        .expect("feed event serializes")
}

/// Backlog after `from`, then live events; sequence numbers are the event ids.
fn feed_events(
    svc: Arc<Service>,
    id: ProjectId,
    from: u64,
) -> Result<impl Stream<Item = Result<Event, Infallible>>, ServiceError> {
    let (backlog, rx) = svc.store().subscribe(&id, from)?;
    let cursor = FeedCursor {
        svc,
        id,
        queue: backlog.into(),
        rx,
        last: from,
    };
    Ok(futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(ev) = c.queue.pop_front() {
                if ev.sequence <= c.last {
                    continue;
                }
                c.last = ev.sequence;
                let out = sse_event(&ev);
                return Some((Ok(out), c));
            }
            match c.rx.recv().await {
                Ok(ev) => c.queue.push_back(ev),
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let missed = c.svc.feed(&c.id, c.last).ok()?;
                    c.queue.extend(missed);
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }))
}

async fn feed_stream(
    State(s): State<AppState>,
    Path(id): Path<ProjectId>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let from = from_sequence(&q, &headers)?;
    let stream = feed_events(s.svc.clone(), id, from)?;
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Binds `config.listen` and serves until `shutdown` resolves, then syncs the
/// commit logs. `on_bound` receives the actual address (useful with port 0).
pub async fn serve<F>(
    config: &ServiceConfig,
    shutdown: F,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<(), ServeError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let svc = Arc::new(Service::open(config)?);
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServeError::BindFailure {
            addr: config.listen,
            source,
        })?;
    let addr = listener.local_addr()?;
    tracing::info!(%addr, data_dir = %config.data_dir.display(), "serving");
    on_bound(addr);
    axum::serve(listener, router(svc.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    svc.store().flush()?;
    tracing::info!("shut down");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn route_tags_are_consistent() {
        for r in ROUTES {
            assert_eq!(r.sublayer.layer(), r.layer, "{}", r.path);
            let prefix_ok = match r.sublayer {
                Sublayer::Trade => r.path.starts_with("/data/projects"),
                Sublayer::Indices => r.path.starts_with("/data/indices/"),
                Sublayer::Models => r.path.starts_with("/technique/models/"),
                Sublayer::Indicators => r.path.starts_with("/action/indicators/"),
                Sublayer::Function | Sublayer::Applicative => r.path.starts_with("/lifecycle/"),
                Sublayer::Interface => r.path.starts_with("/feed/") || !r.path[1..].contains('/'),
            };
            assert!(prefix_ok, "{} tagged {:?}", r.path, r.sublayer);
        }
        let mut keys: Vec<_> = ROUTES.iter().map(|r| (r.method, r.path)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), ROUTES.len());
    }

    #[test]
    fn error_statuses() {
        assert_eq!(
            status_of(&ServiceError::MissingRole),
            StatusCode::UNAUTHORIZED
        );
        assert_eq!(
            status_of(&ServiceError::ConflictingRevision {
                expected: 1,
                actual: 2
            }),
            StatusCode::PRECONDITION_FAILED
        );
        assert_eq!(
            status_of(&ServiceError::MethodNotAllowed(String::new())),
            StatusCode::METHOD_NOT_ALLOWED
        );
    }
}
