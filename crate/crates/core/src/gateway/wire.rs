//! JSON bodies of the model wire protocol. Batches are the unit of
//! transport; single calls are batches of one.

use serde::{Deserialize, Serialize};

use super::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedTextRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedTextResponse {
    pub embeddings: Vec<Vec<f32>>,
    pub dim: usize,
}

/// Body shared by `/v1/embed_image` and `/v1/caption`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub image_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<[f64; 4]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedImageResponse {
    pub embeddings: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub boxes: Vec<[f64; 5]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteRequest {
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub frequency_penalty: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub completions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn box_coords(b: &BoundingBox) -> [f64; 4] {
    [b.x_min, b.y_min, b.x_max, b.y_max]
}

pub fn box_from_coords(c: [f64; 4]) -> BoundingBox {
    BoundingBox::new(c[0], c[1], c[2], c[3], 1.0)
}

pub fn scored_box(b: &BoundingBox) -> [f64; 5] {
    [b.x_min, b.y_min, b.x_max, b.y_max, b.score]
}

pub fn box_from_scored(c: [f64; 5]) -> BoundingBox {
    BoundingBox::new(c[0], c[1], c[2], c[3], c[4])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_request_omits_absent_boxes() {
        let req = ImageRequest {
            image_b64: "AA==".into(),
            boxes: None,
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"image_b64":"AA=="}"#
        );
        let back: ImageRequest =
            serde_json::from_str(r#"{"image_b64":"AA==","boxes":[[0,1,2,3]]}"#).unwrap();
        assert_eq!(back.boxes, Some(vec![[0.0, 1.0, 2.0, 3.0]]));
    }

    #[test]
    fn complete_request_field_names() {
        let req = CompleteRequest {
            prompt: "p".into(),
            n: 2,
            temperature: 0.8,
            frequency_penalty: 0.5,
            max_tokens: 100,
        };
        let v: serde_json::Value = serde_json::to_value(&req).unwrap();
        for key in [
            "prompt",
            "n",
            "temperature",
            "frequency_penalty",
            "max_tokens",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
