//! HTTP front end for one scroll engine.
//!
//! | route             | method | body / query       | reply                          |
//! |-------------------|--------|--------------------|--------------------------------|
//! | `/api/meta`       | GET    |                    | `{lambda_max, h, schema, ...}` |
//! | `/api/window`     | GET    | `?lambda=L`        | window                         |
//! | `/api/locate`     | POST   | `{"keys": [...]}`  | window plus `lambda_estimate`  |
//! | `/api/release`    | POST   |                    | 202                            |
//! | `/api/step`       | POST   | `{"n": ±k}`        | window                         |
//! | `/api/events`     | GET    |                    | NDJSON stream of engine events |
//!
//! Every route answers 503 until the table is loaded.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, OnceLock};
use std::thread;

use anyhow::Result;
use axum::body::{Body, Bytes};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use keyscroll_core::{EngineConfig, IndexedTable, ScrollEngine};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::broadcast;
use tracing::{info, warn};

use crate::wire;

const EVENT_BUFFER: usize = 4096;

struct Ready {
    engine: Arc<ScrollEngine>,
    events: broadcast::Sender<Arc<str>>,
}

/// Shared between all requests. Starts out loading.
#[derive(Default)]
pub struct AppState {
    ready: OnceLock<Result<Ready, String>>,
}

impl AppState {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Loads the table on a background thread and starts the engine on it.
    pub fn load<F>(self: &Arc<Self>, config: EngineConfig, loader: F)
    where
        F: FnOnce() -> Result<IndexedTable> + Send + 'static,
    {
        let state = Arc::clone(self);
        thread::Builder::new()
            .name("ingest".into())
            .spawn(move || {
                let outcome = match loader() {
                    Ok(table) => {
                        info!(rows = table.len(), "table loaded");
                        Ok(start(table, config))
                    }
                    Err(e) => {
                        warn!(error = %format!("{e:#}"), "loading failed");
                        Err(format!("{e:#}"))
                    }
                };
                let _ = state.ready.set(outcome);
            })
            .expect("spawn ingest thread");
    }

    pub fn engine(&self) -> Option<&Arc<ScrollEngine>> {
        match self.ready.get() {
            Some(Ok(ready)) => Some(&ready.engine),
            _ => None,
        }
    }

    fn ready(&self) -> Result<&Ready, ApiError> {
        match self.ready.get() {
            Some(Ok(ready)) => Ok(ready),
            Some(Err(e)) => Err(ApiError::unavailable(format!("table failed to load: {e}"))),
            None => Err(ApiError::unavailable("table is still loading".into())),
        }
    }
}

fn start(table: IndexedTable, config: EngineConfig) -> Ready {
    let engine = Arc::new(ScrollEngine::start(Arc::new(table), config));
    let (events, _) = broadcast::channel(EVENT_BUFFER);
    let rx = engine.subscribe();
    let tx = events.clone();
    let schema = Arc::clone(engine.schema());
    thread::Builder::new()
        .name("events".into())
        .spawn(move || {
            while let Ok(event) = rx.recv() {
                let mut line = wire::event_to_json(&schema, &event).to_string();
                line.push('\n');
                let _ = tx.send(line.into());
            }
        })
        .expect("spawn event thread");
    Ready { engine, events }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/meta", get(meta))
        .route("/api/window", get(window))
        .route("/api/locate", post(locate))
        .route("/api/release", post(release))
        .route("/api/step", post(step))
        .route("/api/events", get(events))
        .with_state(state)
}

/// Serves until the listener fails or ctrl-c arrives.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn unavailable(message: String) -> Self {
        Self {
            status: StatusCode::SERVICE_UNAVAILABLE,
            message,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn parse_body(body: &Bytes) -> Result<Value, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}")))
}

async fn meta(State(state): State<Arc<AppState>>) -> ApiResult {
    let engine = &state.ready()?.engine;
    let table = engine.table();
    Ok(Json(json!({
        "lambda_max": engine.lambda_max(),
        "lambda_max_known": engine.lambda_max_known(),
        "h": engine.config().h,
        "page_size": engine.config().page_size,
        "generation": engine.state().generation,
        "schema": wire::schema_to_json(engine.schema()),
        "payload_columns": table.payload_columns(),
    }))
    .into_response())
}

async fn window(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let engine = &state.ready()?.engine;
    let raw = q.get("lambda").ok_or_else(|| ApiError::bad_request("missing `lambda`"))?;
    let lambda: u64 = raw
        .parse()
        .map_err(|_| ApiError::bad_request(format!("`lambda` must be a non-negative integer, got {raw:?}")))?;
    let w = engine.on_scroll(lambda);
    Ok(Json(wire::window_to_json(engine.schema(), &w)).into_response())
}

async fn locate(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let engine = &state.ready()?.engine;
    let body = parse_body(&body)?;
    let keys = body.get("keys").ok_or_else(|| ApiError::bad_request("missing `keys`"))?;
    let keys = wire::keys_from_json(engine.schema(), keys).map_err(ApiError::bad_request)?;
    let w = engine
        .position_to(&keys)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut reply = wire::window_to_json(engine.schema(), &w);
    reply["lambda_estimate"] = json!(w.lambda);
    Ok(Json(reply).into_response())
}

async fn release(State(state): State<Arc<AppState>>) -> ApiResult {
    let engine = &state.ready()?.engine;
    let scheduled = engine.on_scroll_release();
    let generation = engine.state().generation;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "scheduled": scheduled, "generation": generation })),
    )
        .into_response())
}

async fn step(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let engine = &state.ready()?.engine;
    let body = parse_body(&body)?;
    let n = body
        .get("n")
        .and_then(Value::as_i64)
        .filter(|&n| n != 0)
        .ok_or_else(|| ApiError::bad_request("`n` must be a non-zero integer"))?;
    let w = engine.small_step(n);
    Ok(Json(wire::window_to_json(engine.schema(), &w)).into_response())
}

async fn events(State(state): State<Arc<AppState>>) -> ApiResult {
    let rx = state.ready()?.events.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(line) => return Some((Ok::<_, Infallible>(line.as_bytes().to_vec()), rx)),
                Err(broadcast::error::RecvError::Lagged(n)) => warn!(skipped = n, "event subscriber lagging"),
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(stream),
    )
        .into_response())
}

/// Binds `config.listen`, loads the table in the background and serves.
pub fn run(config: &crate::config::AppConfig, seed: u64) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = TcpListener::bind(&config.listen).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        info!(%addr, "listening");
        let state = AppState::new();
        let loader_config = config.clone();
        state.load(config.engine_config(), move || loader_config.load_table(seed));
        serve(listener, state).await?;
        Ok(())
    })
}
