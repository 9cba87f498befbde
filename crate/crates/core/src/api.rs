//! JSON bodies of the service's `/api/*` routes, shared by server and
//! client.

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::clues::VisualClues;
use crate::error::{Error, Result};
use crate::gateway::ImageInput;
use crate::sgraph::SceneGraph;
use crate::vqa::Mode;

pub const HEALTH: &str = "/healthz";
pub const DESCRIBE: &str = "/api/describe";
pub const CLUES: &str = "/api/clues";
pub const PROMPT: &str = "/api/prompt";
pub const SPIPE: &str = "/api/spipe";
pub const VQA: &str = "/api/vqa";

/// An image in a request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePayload {
    /// Identifier echoed back in results; defaults to `image`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub image_b64: String,
}

impl ImagePayload {
    pub fn new(id: impl Into<String>, bytes: &[u8]) -> Self {
        ImagePayload {
            id: Some(id.into()),
            image_b64: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<ImageInput> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(self.image_b64.trim())
            .map_err(|e| Error::invalid(format!("image is not valid base64: {e}")))?;
        ImageInput::decode(self.id.clone().unwrap_or_else(|| "image".into()), bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescribeRequest {
    #[serde(flatten)]
    pub image: ImagePayload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub clues: VisualClues,
    /// Ending name; the server's configured ending when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ending: Option<String>,
    #[serde(default = "yes")]
    pub include_caption: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptResponse {
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpipeRequest {
    pub candidate: SceneGraph,
    pub reference: SceneGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaRequest {
    #[serde(flatten)]
    pub image: ImagePayload,
    pub question: String,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaResponse {
    pub long_answer: String,
    pub short_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub backend: String,
}
