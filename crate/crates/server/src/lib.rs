//! HTTP front end for the question-answering pipeline.
//!
//! | route                 | body                                     |
//! |-----------------------|------------------------------------------|
//! | `POST /api/answers`   | `{question, context?, overrides?}`       |
//! | `POST /api/documents` | `{question, overrides?}`                 |
//! | `POST /api/expand`    | `{question, overrides?}`                 |
//! | `POST /api/explain`   | `{question, context, start, end}`        |
//! | `GET /api/config`     |                                          |
//!
//! Everything else is served from the static directory, if one is given.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use relqa_core::config::PipelineConfig;
use relqa_core::pipeline::{Overrides, Pipeline, PipelineError, QueryRequest};
use relqa_core::reader::ReaderError;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub struct AppState {
    pub pipeline: Pipeline,
    pub config: PipelineConfig,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn bad_request(msg: impl Into<String>, field: Option<&str>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                error: msg.into(),
                field: field.map(String::from),
                warnings: Vec::new(),
            },
        }
    }

    fn unavailable(msg: impl Into<String>, warnings: Vec<String>) -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            body: ErrorBody {
                error: msg.into(),
                field: None,
                warnings,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text(), None)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidOverride { ref field, .. } => {
                let field = format!("overrides.{field}");
                ApiError::bad_request(e.to_string(), Some(&field))
            }
            PipelineError::NothingToRead { ref warnings } => {
                let warnings = warnings.clone();
                ApiError::unavailable(e.to_string(), warnings)
            }
            PipelineError::Reader(r) => r.into(),
        }
    }
}

impl From<ReaderError> for ApiError {
    fn from(e: ReaderError) -> Self {
        match e {
            ReaderError::InvalidStride { .. } => ApiError::bad_request(e.to_string(), Some("reader.stride")),
            ReaderError::BackendUnavailable(_) => ApiError::unavailable(e.to_string(), Vec::new()),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn require_question(q: &str) -> Result<(), ApiError> {
    if q.trim().is_empty() {
        return Err(ApiError::bad_request("question must be nonempty", Some("question")));
    }
    Ok(())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        body: ErrorBody {
            error: format!("worker failed: {e}"),
            field: None,
            warnings: Vec::new(),
        },
    })?
}

async fn answers(
    State(state): State<Arc<AppState>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> ApiResult<relqa_core::pipeline::QueryResponse> {
    let Json(req) = body?;
    require_question(&req.question)?;
    blocking(move || state.pipeline.answer(&req).map_err(ApiError::from)).await.map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionRequest {
    question: String,
    #[serde(default)]
    overrides: Overrides,
}

async fn documents(
    State(state): State<Arc<AppState>>,
    body: Result<Json<QuestionRequest>, JsonRejection>,
) -> ApiResult<relqa_core::pipeline::DocumentsResponse> {
    let Json(req) = body?;
    require_question(&req.question)?;
    blocking(move || {
        if state.pipeline.index().is_none() {
            return Err(ApiError::unavailable(
                "no index loaded",
                state.pipeline.startup_warnings().to_vec(),
            ));
        }
        Ok(state.pipeline.documents(&req.question, &req.overrides)?)
    })
    .await
    .map(Json)
}

async fn expand(
    State(state): State<Arc<AppState>>,
    body: Result<Json<QuestionRequest>, JsonRejection>,
) -> ApiResult<relqa_core::expander::ExpandedQuery> {
    let Json(req) = body?;
    require_question(&req.question)?;
    blocking(move || {
        let settings = state.pipeline.settings().with_overrides(&req.overrides)?;
        Ok(state.pipeline.expand(&req.question, &settings))
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainRequest {
    question: String,
    context: String,
    /// Byte offsets of the span in `context`.
    start: usize,
    end: usize,
}

#[derive(Debug, Serialize)]
struct ExplainResponse {
    backend: String,
    attributions: Vec<relqa_core::reader::TokenAttribution>,
}

async fn explain(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ExplainRequest>, JsonRejection>,
) -> ApiResult<ExplainResponse> {
    let Json(req) = body?;
    require_question(&req.question)?;
    let ctx = &req.context;
    if req.start > req.end || req.end > ctx.len() || !ctx.is_char_boundary(req.start) || !ctx.is_char_boundary(req.end)
    {
        return Err(ApiError::bad_request(
            format!("span {}..{} is not a valid range of the context", req.start, req.end),
            Some("start"),
        ));
    }
    blocking(move || {
        let attributions = state.pipeline.explain(&req.question, &req.context, req.start, req.end)?;
        Ok(ExplainResponse {
            backend: state.pipeline.reader().name().to_string(),
            attributions,
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Serialize)]
struct ConfigView {
    config: PipelineConfig,
    index_loaded: bool,
    document_count: usize,
    reader_backend: String,
    warnings: Vec<String>,
}

async fn config(State(state): State<Arc<AppState>>) -> Json<ConfigView> {
    let p = &state.pipeline;
    Json(ConfigView {
        config: state.config.clone(),
        index_loaded: p.index().is_some(),
        document_count: p.index().map_or(0, |ix| ix.len()),
        reader_backend: p.reader().name().to_string(),
        warnings: p.startup_warnings().to_vec(),
    })
}

const FALLBACK_PAGE: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>relqa</title></head>
<body>
<h1>relqa</h1>
<p>No web console is installed. Start the server with <code>--static-dir</code> to serve one.</p>
<p>API: <code>POST /api/answers</code>, <code>POST /api/documents</code>, <code>POST /api/expand</code>,
<code>POST /api/explain</code>, <code>GET /api/config</code>.</p>
</body></html>
";

async fn fallback_page() -> Html<&'static str> {
    Html(FALLBACK_PAGE)
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/answers", post(answers))
        .route("/api/documents", post(documents))
        .route("/api/expand", post(expand))
        .route("/api/explain", post(explain))
        .route("/api/config", get(config))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(fallback_page)),
    }
}
