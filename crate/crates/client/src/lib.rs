//! Client for a running `best-server`.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use best_core::api::{
    self, DescribeRequest, Health, ImagePayload, PromptRequest, PromptResponse, SpipeRequest,
    VqaRequest, VqaResponse,
};
use best_core::clues::VisualClues;
use best_core::corpus::RunRecord;
use best_core::gateway::wire::ErrorBody;
use best_core::sgraph::{SceneGraph, SpipeScore};
use best_core::vqa::Mode;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Transport {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    /// The server answered with an error status.
    #[error("{url} returned {status}: {message}")]
    Status {
        url: String,
        status: u16,
        message: String,
    },
}

impl ClientError {
    /// Whether the server rejected the request itself rather than failing
    /// to process it.
    pub fn is_client_error(&self) -> bool {
        matches!(self, ClientError::Status { status, .. } if (400..500).contains(status))
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        Self::with_timeout(base_url, Duration::from_secs(600))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Result<Self, ClientError> {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|source| ClientError::Transport {
                url: base_url.to_string(),
                source,
            })?;
        Ok(Client {
            http,
            base: base_url.trim_end_matches('/').to_string(),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(
        url: String,
        resp: reqwest::Response,
    ) -> Result<T, ClientError> {
        let status = resp.status();
        if !status.is_success() {
            let message = match resp.json::<ErrorBody>().await {
                Ok(body) => body.error,
                Err(_) => status.canonical_reason().unwrap_or("error").to_string(),
            };
            return Err(ClientError::Status {
                url,
                status: status.as_u16(),
                message,
            });
        }
        resp.json()
            .await
            .map_err(|source| ClientError::Transport { url, source })
    }

    async fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, ClientError> {
        let url = format!("{}{path}", self.base);
        let resp = self
            .http
            .post(&url)
            .json(body)
            .send()
            .await
            .map_err(|source| ClientError::Transport {
                url: url.clone(),
                source,
            })?;
        Self::decode(url, resp).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        let url = format!("{}{}", self.base, api::HEALTH);
        let resp = self
            .http
            .get(&url)
            .send()
            .await
            .map_err(|source| ClientError::Transport {
                url: url.clone(),
                source,
            })?;
        Self::decode(url, resp).await
    }

    pub async fn describe(
        &self,
        id: &str,
        image: &[u8],
        ocr_text: Option<String>,
    ) -> Result<RunRecord, ClientError> {
        let req = DescribeRequest {
            image: ImagePayload::new(id, image),
            ocr_text,
        };
        self.post(api::DESCRIBE, &req).await
    }

    pub async fn clues(&self, id: &str, image: &[u8]) -> Result<VisualClues, ClientError> {
        self.post(api::CLUES, &ImagePayload::new(id, image)).await
    }

    pub async fn prompt(
        &self,
        clues: &VisualClues,
        ending: Option<&str>,
        include_caption: bool,
    ) -> Result<String, ClientError> {
        let req = PromptRequest {
            clues: clues.clone(),
            ending: ending.map(str::to_string),
            include_caption,
        };
        let resp: PromptResponse = self.post(api::PROMPT, &req).await?;
        Ok(resp.prompt)
    }

    pub async fn spipe(
        &self,
        candidate: &SceneGraph,
        reference: &SceneGraph,
    ) -> Result<SpipeScore, ClientError> {
        let req = SpipeRequest {
            candidate: candidate.clone(),
            reference: reference.clone(),
        };
        self.post(api::SPIPE, &req).await
    }

    pub async fn vqa(
        &self,
        id: &str,
        image: &[u8],
        question: &str,
        mode: Mode,
    ) -> Result<VqaResponse, ClientError> {
        let req = VqaRequest {
            image: ImagePayload::new(id, image),
            question: question.to_string(),
            mode,
        };
        self.post(api::VQA, &req).await
    }
}
