//! HTTP front end over `best-core`.
//!
//! [`app`] serves the `/api/*` routes from a loaded run configuration.
//! [`model_router`] serves the `/v1/*` model protocol from any
//! [`ModelBackend`], which turns the mock backend into a stand-alone model
//! server for integration tests and demos.

mod models;

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use best_core::api::{
    self, DescribeRequest, Health, ImagePayload, PromptRequest, PromptResponse, SpipeRequest,
    VqaRequest, VqaResponse,
};
use best_core::clues::{extract_clues, VisualClues};
use best_core::corpus::{Describer, RunConfig, RunRecord};
use best_core::gateway::wire::ErrorBody;
use best_core::prompt::{serialize, TaskEnding};
use best_core::sgraph::{spipe, SpipeScore, SynonymLexicon};
use best_core::vqa::{answer_question, discriminative_answer, reformat_answer, AnswerIndex, Mode};
use best_core::Error;

pub use models::model_router;

#[derive(Debug, Clone)]
pub struct AppState {
    pub describer: Describer,
    pub lexicon: Arc<SynonymLexicon>,
    pub answers: Option<Arc<AnswerIndex>>,
    pub backend_kind: &'static str,
}

impl AppState {
    /// Loads vocabularies, lexicon and answer index named in `config`.
    pub async fn from_config(config: &RunConfig) -> best_core::Result<Self> {
        let describer = Describer::from_config(config).await?;
        let lexicon = match &config.spipe.lexicon {
            Some(path) => SynonymLexicon::load(path)?,
            None => SynonymLexicon::new(),
        };
        let answers = match &config.vqa.answers {
            Some(path) => Some(Arc::new(AnswerIndex::load(path, &describer.gateway).await?)),
            None => None,
        };
        Ok(AppState {
            describer,
            lexicon: Arc::new(lexicon),
            answers,
            backend_kind: if config.is_mock() { "mock" } else { "remote" },
        })
    }
}

/// Error response: `{"error": "..."}` with a status from the error kind.
#[derive(Debug)]
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e.root() {
        Error::InvalidInput(_) | Error::Parse { .. } | Error::Json(_) => StatusCode::BAD_REQUEST,
        Error::Backend { .. } | Error::PartialCompletion { .. } => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let body = ErrorBody {
            error: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        backend: state.backend_kind.into(),
    })
}

async fn describe(
    State(state): State<AppState>,
    Json(req): Json<DescribeRequest>,
) -> ApiResult<RunRecord> {
    let image = req.image.decode()?;
    Ok(Json(state.describer.describe(&image, req.ocr_text).await?))
}

async fn clues(
    State(state): State<AppState>,
    Json(req): Json<ImagePayload>,
) -> ApiResult<VisualClues> {
    let image = req.decode()?;
    let d = &state.describer;
    Ok(Json(
        extract_clues(&d.gateway, &image, &d.tags, &d.attributes, &d.clue_params).await?,
    ))
}

async fn prompt(
    State(state): State<AppState>,
    Json(req): Json<PromptRequest>,
) -> ApiResult<PromptResponse> {
    req.clues.validate()?;
    let d = &state.describer;
    let ending = match &req.ending {
        Some(name) => TaskEnding::from_name(name, &d.style.endings)?,
        None => d.ending.clone(),
    };
    Ok(Json(PromptResponse {
        prompt: serialize(&req.clues, &ending, req.include_caption, &d.style)?,
    }))
}

async fn score(
    State(state): State<AppState>,
    Json(req): Json<SpipeRequest>,
) -> ApiResult<SpipeScore> {
    Ok(Json(spipe(
        &req.candidate.normalized(),
        &req.reference.normalized(),
        &state.lexicon,
    )))
}

async fn vqa(State(state): State<AppState>, Json(req): Json<VqaRequest>) -> ApiResult<VqaResponse> {
    let image = req.image.decode()?;
    let d = &state.describer;
    let clues = extract_clues(&d.gateway, &image, &d.tags, &d.attributes, &d.clue_params).await?;
    let long = answer_question(&d.gateway, &clues, &req.question, &d.sampling, &d.style).await?;
    let short = reformat_answer(&d.gateway, &req.question, &long).await?;
    let final_answer = match req.mode {
        Mode::Generative => None,
        Mode::Discriminative => {
            let index = state.answers.as_deref().ok_or_else(|| {
                Error::invalid("the server has no answer index for discriminative mode")
            })?;
            Some(discriminative_answer(&d.gateway, &short, index).await?)
        }
    };
    Ok(Json(VqaResponse {
        long_answer: long,
        short_answer: short,
        final_answer,
    }))
}

/// Routes of the `/api/*` service plus `/healthz`.
pub fn app(state: AppState) -> Router {
    Router::new()
        .route(api::HEALTH, get(health))
        .route(api::DESCRIBE, post(describe))
        .route(api::CLUES, post(clues))
        .route(api::PROMPT, post(prompt))
        .route(api::SPIPE, post(score))
        .route(api::VQA, post(vqa))
        .with_state(state)
}

/// Serves `router` until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
