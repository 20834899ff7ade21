//! HTTP front end for the synthesizer.
//!
//! * `POST /api/synthesize` runs the pipeline on a [`SynthesisRequest`].
//!   With `?stream=true` (or `Accept: application/x-ndjson`) the response is
//!   newline-delimited JSON: `candidate` events, fast-worker results first,
//!   then one `done` event carrying the final ranking and stats.
//! * `POST /api/transform` evaluates a program on a table.
//! * `GET /api/health` reports liveness and the build version.

mod config;
mod error;

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, HeaderMap, HeaderValue};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::channel::mpsc;
use futures::StreamExt;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::cors::{Any, CorsLayer};

use vizsynth_core::compile::Candidate;
use vizsynth_core::decompile::decompile;
use vizsynth_core::lang::parse;
use vizsynth_core::pipeline::{
    run_with, CandidateSummary, PipelineError, ResponseStats, SynthesisRequest, TableInput,
    NO_CANDIDATE,
};
use vizsynth_core::synth::SearchConfig;
use vizsynth_core::{eval, Table};

pub use config::{parse_budgets, EnvError, ServiceConfig, DEFAULT_MAX_CONCURRENT, DEFAULT_PORT};
pub use error::ApiError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MAX_BODY_BYTES: usize = 5 * 1024 * 1024;
pub const NDJSON: &str = "application/x-ndjson";

#[derive(Clone)]
struct AppState {
    search: Arc<SearchConfig>,
    limit: Arc<Semaphore>,
}

pub fn router(cfg: &ServiceConfig) -> Router {
    let state = AppState {
        search: Arc::new(cfg.search.clone()),
        limit: Arc::new(Semaphore::new(cfg.max_concurrent)),
    };
    let cors = CorsLayer::new()
        .allow_methods(Any)
        .allow_headers(Any);
    let cors = match cfg.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => cors.allow_origin(origin),
        _ => cors.allow_origin(Any),
    };
    Router::new()
        .route("/api/health", get(health))
        .route("/api/synthesize", post(synthesize))
        .route("/api/transform", post(transform))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .layer(cors)
        .with_state(state)
}

/// Binds `0.0.0.0:port` and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", cfg.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(&cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": VERSION }))
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::bad_request(path, e.into_inner())
    })
}

fn load_table(t: &TableInput) -> Result<Table, ApiError> {
    let table = t.load().map_err(|e| ApiError::bad_request("table", e))?;
    if table.num_rows() == 0 || table.num_cols() == 0 {
        return Err(ApiError::bad_request("table", "table is empty"));
    }
    Ok(table)
}

#[derive(Debug, Default, Deserialize)]
struct SynthParams {
    #[serde(default)]
    stream: bool,
}

fn wants_stream(params: &SynthParams, headers: &HeaderMap) -> bool {
    params.stream
        || headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.contains(NDJSON))
}

/// Which phase produced a streamed candidate.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "lowercase")]
enum Stage {
    Fast,
    Final,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum StreamEvent<'a> {
    Candidate {
        stage: Stage,
        candidate: CandidateSummary,
    },
    Done {
        order: Vec<&'a str>,
        stats: &'a ResponseStats,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<&'static str>,
    },
    Error {
        error: String,
    },
}

fn event_line(ev: &StreamEvent) -> Bytes {
    let mut line = serde_json::to_vec(ev).expect("events serialize");
    line.push(b'\n');
    Bytes::from(line)
}

async fn synthesize(
    State(app): State<AppState>,
    Query(params): Query<SynthParams>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: SynthesisRequest = parse_body(&body)?;
    if req.elements.is_empty() {
        return Err(ApiError::bad_request("elements", "at least one element is required"));
    }
    let table = load_table(&req.table)?;
    let cfg = req.config.apply(&app.search);
    cfg.validate().map_err(|e| ApiError::bad_request("config", e))?;
    decompile(&req.elements)?;

    let permit = app
        .limit
        .clone()
        .acquire_owned()
        .await
        .map_err(ApiError::internal)?;
    let elements = req.elements;
    log::info!(
        "synthesize: {} elements, {}x{} table",
        elements.len(),
        table.num_rows(),
        table.num_cols()
    );

    if !wants_stream(&params, &headers) {
        let out = tokio::task::spawn_blocking(move || {
            let _permit = permit;
            run_with(&table, &elements, &cfg, None)
        })
        .await
        .map_err(ApiError::internal)?
        .map_err(pipeline_error)?;
        return Ok(Json(out.response()).into_response());
    }

    let (tx, rx) = mpsc::unbounded::<Bytes>();
    tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let mut sent: Vec<String> = Vec::new();
        let mut on_fast = |cands: &[Candidate]| {
            for c in cands {
                sent.push(c.id.clone());
                let _ = tx.unbounded_send(event_line(&StreamEvent::Candidate {
                    stage: Stage::Fast,
                    candidate: CandidateSummary::from(c),
                }));
            }
        };
        match run_with(&table, &elements, &cfg, Some(&mut on_fast)) {
            Ok(out) => {
                for c in out.candidates.iter().filter(|c| !sent.contains(&c.id)) {
                    let _ = tx.unbounded_send(event_line(&StreamEvent::Candidate {
                        stage: Stage::Final,
                        candidate: CandidateSummary::from(c),
                    }));
                }
                let done = StreamEvent::Done {
                    order: out.candidates.iter().map(|c| c.id.as_str()).collect(),
                    stats: &out.stats,
                    reason: out.candidates.is_empty().then_some(NO_CANDIDATE),
                };
                let _ = tx.unbounded_send(event_line(&done));
            }
            Err(e) => {
                let _ = tx.unbounded_send(event_line(&StreamEvent::Error {
                    error: e.to_string(),
                }));
            }
        }
    });
    let body = Body::from_stream(rx.map(Ok::<_, Infallible>));
    Ok(([(header::CONTENT_TYPE, NDJSON)], body).into_response())
}

fn pipeline_error(e: PipelineError) -> ApiError {
    match e {
        PipelineError::Config(e) => ApiError::bad_request("config", e),
        PipelineError::Table(e) => ApiError::bad_request("table", e),
        PipelineError::Decompile(e) => e.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformRequest {
    table: TableInput,
    program: String,
}

async fn transform(body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: TransformRequest = parse_body(&body)?;
    let table = req.table.load().map_err(|e| ApiError::bad_request("table", e))?;
    let program = parse(&req.program)?;
    let out = eval(&program, &table)?;
    Ok(Json(out.to_json()))
}
