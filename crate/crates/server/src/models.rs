use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};

use best_core::api::ImagePayload;
use best_core::gateway::wire::{
    box_from_coords, scored_box, CaptionResponse, CompleteRequest, CompleteResponse, DetectRequest,
    DetectResponse, EmbedImageResponse, EmbedTextRequest, EmbedTextResponse, ImageRequest,
};
use best_core::gateway::{BoundingBox, Capability, ImageInput, ModelBackend, SamplingParams};

use crate::ApiError;

type Backend = Arc<dyn ModelBackend>;

fn decode(image_b64: String) -> Result<ImageInput, ApiError> {
    Ok(ImagePayload {
        id: None,
        image_b64,
    }
    .decode()?)
}

fn crops(boxes: Option<Vec<[f64; 4]>>) -> Option<Vec<BoundingBox>> {
    boxes.map(|b| b.into_iter().map(box_from_coords).collect())
}

async fn embed_text(
    State(b): State<Backend>,
    Json(req): Json<EmbedTextRequest>,
) -> Result<Json<EmbedTextResponse>, ApiError> {
    let embeddings = b.embed_texts(&req.texts).await?;
    let dim = embeddings.first().map_or(0, Vec::len);
    Ok(Json(EmbedTextResponse { embeddings, dim }))
}

async fn embed_image(
    State(b): State<Backend>,
    Json(req): Json<ImageRequest>,
) -> Result<Json<EmbedImageResponse>, ApiError> {
    let image = decode(req.image_b64)?;
    let crops = crops(req.boxes);
    let embeddings = b.embed_image(&image, crops.as_deref()).await?;
    Ok(Json(EmbedImageResponse { embeddings }))
}

async fn caption(
    State(b): State<Backend>,
    Json(req): Json<ImageRequest>,
) -> Result<Json<CaptionResponse>, ApiError> {
    let image = decode(req.image_b64)?;
    let crops = crops(req.boxes);
    let captions = b.caption(&image, crops.as_deref()).await?;
    Ok(Json(CaptionResponse { captions }))
}

async fn detect(
    State(b): State<Backend>,
    Json(req): Json<DetectRequest>,
) -> Result<Json<DetectResponse>, ApiError> {
    let image = decode(req.image_b64)?;
    let boxes = b.detect(&image).await?.iter().map(scored_box).collect();
    Ok(Json(DetectResponse { boxes }))
}

async fn complete(
    State(b): State<Backend>,
    Json(req): Json<CompleteRequest>,
) -> Result<Json<CompleteResponse>, ApiError> {
    let params = SamplingParams {
        temperature: req.temperature,
        frequency_penalty: req.frequency_penalty,
        max_tokens: req.max_tokens,
    };
    let completions = b.complete(&req.prompt, req.n, &params).await?;
    Ok(Json(CompleteResponse { completions }))
}

/// The five `/v1/*` model routes backed by `backend`.
pub fn model_router(backend: Arc<dyn ModelBackend>) -> Router {
    Router::new()
        .route(Capability::EmbedText.path(), post(embed_text))
        .route(Capability::EmbedImage.path(), post(embed_image))
        .route(Capability::Caption.path(), post(caption))
        .route(Capability::Detect.path(), post(detect))
        .route(Capability::Complete.path(), post(complete))
        .with_state(backend)
}
