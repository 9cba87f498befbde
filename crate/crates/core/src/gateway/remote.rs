//! HTTP client for the model wire protocol.

use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{self, *};
use super::{
    BackendConfig, BoundingBox, Capability, Endpoints, ImageInput, ModelBackend, SamplingParams,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: reqwest::Client,
    endpoints: Endpoints,
    bearer_token: Option<String>,
}

impl RemoteBackend {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteBackend {
            client,
            endpoints: config.endpoints.clone(),
            bearer_token: config.bearer_token.clone(),
        })
    }

    /// One retry on transport failures and 5xx; none on 4xx.
    async fn post<Req, Resp>(&self, cap: Capability, body: &Req) -> Result<Resp>
    where
        Req: Serialize + Sync,
        Resp: DeserializeOwned,
    {
        let url = self.endpoints.url(cap);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(&url, body).await {
                Ok(resp) => return Ok(resp),
                Err(Failure::Retryable(cause)) if attempt < 2 => {
                    tracing::warn!(%url, %cause, "retrying model request");
                }
                Err(Failure::Retryable(cause)) | Err(Failure::Fatal(cause)) => {
                    return Err(Error::backend(url, cause))
                }
            }
        }
    }

    async fn post_once<Req, Resp>(&self, url: &str, body: &Req) -> Result<Resp, Failure>
    where
        Req: Serialize + Sync,
        Resp: DeserializeOwned,
    {
        let mut req = self.client.post(url).json(body);
        if let Some(token) = &self.bearer_token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(Failure::Retryable(format!("server returned {status}")));
        }
        if !status.is_success() {
            let detail = resp.text().await.unwrap_or_default();
            return Err(Failure::Fatal(format!(
                "server returned {status}: {detail}"
            )));
        }
        resp.json::<Resp>()
            .await
            .map_err(|e| Failure::Fatal(format!("malformed response: {e}")))
    }

    fn image_request(image: &ImageInput, crops: Option<&[BoundingBox]>) -> ImageRequest {
        ImageRequest {
            image_b64: base64::engine::general_purpose::STANDARD.encode(image.bytes()),
            boxes: crops.map(|bs| bs.iter().map(wire::box_coords).collect()),
        }
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

#[async_trait]
impl ModelBackend for RemoteBackend {
    fn endpoint(&self, cap: Capability) -> String {
        self.endpoints.url(cap)
    }

    async fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let resp: EmbedTextResponse = self
            .post(
                Capability::EmbedText,
                &EmbedTextRequest {
                    texts: texts.to_vec(),
                },
            )
            .await?;
        Ok(resp.embeddings)
    }

    async fn embed_image(
        &self,
        image: &ImageInput,
        crops: Option<&[BoundingBox]>,
    ) -> Result<Vec<Vec<f32>>> {
        let resp: EmbedImageResponse = self
            .post(Capability::EmbedImage, &Self::image_request(image, crops))
            .await?;
        Ok(resp.embeddings)
    }

    async fn caption(
        &self,
        image: &ImageInput,
        crops: Option<&[BoundingBox]>,
    ) -> Result<Vec<String>> {
        let resp: CaptionResponse = self
            .post(Capability::Caption, &Self::image_request(image, crops))
            .await?;
        Ok(resp.captions)
    }

    async fn detect(&self, image: &ImageInput) -> Result<Vec<BoundingBox>> {
        let req = DetectRequest {
            image_b64: base64::engine::general_purpose::STANDARD.encode(image.bytes()),
        };
        let resp: DetectResponse = self.post(Capability::Detect, &req).await?;
        Ok(resp.boxes.into_iter().map(wire::box_from_scored).collect())
    }

    async fn complete(
        &self,
        prompt: &str,
        n: usize,
        params: &SamplingParams,
    ) -> Result<Vec<String>> {
        let req = CompleteRequest {
            prompt: prompt.to_string(),
            n,
            temperature: params.temperature,
            frequency_penalty: params.frequency_penalty,
            max_tokens: params.max_tokens,
        };
        let resp: CompleteResponse = self.post(Capability::Complete, &req).await?;
        Ok(resp.completions)
    }
}
