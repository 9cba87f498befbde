//! Uniform access to the five model capabilities: image encoder, text
//! encoder, captioner, detector and language model.
//!
//! Every backend, remote or mock, sits behind [`ModelBackend`]. The
//! [`Gateway`] wraps a backend and enforces the contracts callers rely on:
//! embeddings leave here unit-norm with the configured dimension, boxes are
//! clamped to the image frame and sorted by descending score, and completion
//! batches have exactly the requested size.

mod image_input;
pub mod mock;
pub mod remote;
pub mod wire;

use std::fmt;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::error::{Error, Result};

pub use image_input::ImageInput;
pub use mock::MockBackend;
pub use remote::RemoteBackend;

pub const DEFAULT_EMBEDDING_DIM: usize = 512;

const NORM_TOLERANCE: f64 = 1e-6;

/// A unit-norm embedding vector.
#[derive(Clone, PartialEq)]
pub struct UnitEmbedding(Arc<[f32]>);

impl UnitEmbedding {
    /// L2-normalizes `values`. Zero or non-finite vectors are rejected.
    pub fn normalize(values: &[f32]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding has zero dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding contains non-finite values"));
        }
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("cannot normalize a zero vector"));
        }
        Ok(UnitEmbedding(
            values
                .iter()
                .map(|&v| (f64::from(v) / norm) as f32)
                .collect(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Inner product, accumulated in f64.
    pub fn similarity(&self, other: &UnitEmbedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "embedding dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.dot(other))
    }

    pub(crate) fn dot(&self, other: &UnitEmbedding) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}

impl fmt::Debug for UnitEmbedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UnitEmbedding(dim={})", self.dim())
    }
}

/// Free-function form of [`UnitEmbedding::similarity`].
pub fn similarity(a: &UnitEmbedding, b: &UnitEmbedding) -> Result<f64> {
    a.similarity(b)
}

/// Axis-aligned box in pixel coordinates, origin top-left, y down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(default)]
    pub score: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, score: f64) -> Self {
        BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
            score,
        }
    }

    pub fn full_frame(width: u32, height: u32) -> Self {
        BoundingBox::new(0.0, 0.0, f64::from(width), f64::from(height), 1.0)
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        w.max(0.0) * h.max(0.0)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Smallest box covering both. The score is the lower of the two.
    pub fn union_box(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox::new(
            self.x_min.min(other.x_min),
            self.y_min.min(other.y_min),
            self.x_max.max(other.x_max),
            self.y_max.max(other.y_max),
            self.score.min(other.score),
        )
    }

    /// Intersects with the image frame; `None` when nothing of positive area
    /// remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let (w, h) = (f64::from(width), f64::from(height));
        let clamped = BoundingBox::new(
            self.x_min.clamp(0.0, w),
            self.y_min.clamp(0.0, h),
            self.x_max.clamp(0.0, w),
            self.y_max.clamp(0.0, h),
            self.score.clamp(0.0, 1.0),
        );
        (clamped.x_min < clamped.x_max && clamped.y_min < clamped.y_max).then_some(clamped)
    }

    pub fn covers_frame(&self, width: u32, height: u32) -> bool {
        self.x_min <= 0.0
            && self.y_min <= 0.0
            && self.x_max >= f64::from(width)
            && self.y_max >= f64::from(height)
    }

    fn is_finite(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max, self.score]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Language-model sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub frequency_penalty: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.8,
            frequency_penalty: 0.5,
            max_tokens: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capability {
    EmbedText,
    EmbedImage,
    Caption,
    Detect,
    Complete,
}

impl Capability {
    pub const ALL: [Capability; 5] = [
        Capability::EmbedText,
        Capability::EmbedImage,
        Capability::Caption,
        Capability::Detect,
        Capability::Complete,
    ];

    pub fn path(self) -> &'static str {
        match self {
            Capability::EmbedText => "/v1/embed_text",
            Capability::EmbedImage => "/v1/embed_image",
            Capability::Caption => "/v1/caption",
            Capability::Detect => "/v1/detect",
            Capability::Complete => "/v1/complete",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Mock { seed: u64 },
}

/// Base URL per capability; the capability path is appended.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoints {
    pub embed_text: String,
    pub embed_image: String,
    pub caption: String,
    pub detect: String,
    pub complete: String,
}

impl Endpoints {
    pub fn uniform(base: &str) -> Self {
        Endpoints {
            embed_text: base.to_string(),
            embed_image: base.to_string(),
            caption: base.to_string(),
            detect: base.to_string(),
            complete: base.to_string(),
        }
    }

    pub fn base(&self, cap: Capability) -> &str {
        match cap {
            Capability::EmbedText => &self.embed_text,
            Capability::EmbedImage => &self.embed_image,
            Capability::Caption => &self.caption,
            Capability::Detect => &self.detect,
            Capability::Complete => &self.complete,
        }
    }

    pub fn url(&self, cap: Capability) -> String {
        format!("{}{}", self.base(cap).trim_end_matches('/'), cap.path())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoints: Endpoints,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub dim: usize,
    pub bearer_token: Option<String>,
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        BackendConfig {
            kind: BackendKind::Mock { seed },
            ..BackendConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config("backend timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config(
                "max in-flight requests must be at least 1".into(),
            ));
        }
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.kind == BackendKind::Remote {
            for cap in Capability::ALL {
                if self.endpoints.base(cap).is_empty() {
                    return Err(Error::Config(format!(
                        "remote backend is missing an endpoint for {}",
                        cap.path()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Remote,
            endpoints: Endpoints::default(),
            timeout_ms: 30_000,
            max_in_flight: 8,
            dim: DEFAULT_EMBEDDING_DIM,
            bearer_token: None,
        }
    }
}

/// Raw access to model capabilities. Implementations only move data; the
/// [`Gateway`] validates and normalizes what comes back.
///
/// `crops` of `None` means the whole image and yields one result; otherwise
/// one result per box, in order.
#[async_trait]
pub trait ModelBackend: Send + Sync {
    /// Label used in error messages for a capability.
    fn endpoint(&self, cap: Capability) -> String;

    async fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;

    async fn embed_image(
        &self,
        image: &ImageInput,
        crops: Option<&[BoundingBox]>,
    ) -> Result<Vec<Vec<f32>>>;

    async fn caption(
        &self,
        image: &ImageInput,
        crops: Option<&[BoundingBox]>,
    ) -> Result<Vec<String>>;

    async fn detect(&self, image: &ImageInput) -> Result<Vec<BoundingBox>>;

    async fn complete(
        &self,
        prompt: &str,
        n: usize,
        params: &SamplingParams,
    ) -> Result<Vec<String>>;
}

/// Validating front door to a [`ModelBackend`], shareable across tasks.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ModelBackend>,
    dim: usize,
    permits: Arc<[Semaphore; 5]>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("dim", &self.dim).finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ModelBackend>, dim: usize, max_in_flight: usize) -> Self {
        let cap = max_in_flight.max(1);
        Gateway {
            backend,
            dim,
            permits: Arc::new(std::array::from_fn(|_| Semaphore::new(cap))),
        }
    }

    pub fn from_config(config: &BackendConfig) -> Result<Self> {
        config.validate()?;
        let backend: Arc<dyn ModelBackend> = match config.kind {
            BackendKind::Mock { seed } => Arc::new(MockBackend::new(seed, config.dim)),
            BackendKind::Remote => Arc::new(RemoteBackend::new(config)?),
        };
        Ok(Gateway::new(backend, config.dim, config.max_in_flight))
    }

    /// Mock-backed gateway with the default dimension.
    pub fn mock(seed: u64) -> Self {
        Gateway::new(
            Arc::new(MockBackend::new(seed, DEFAULT_EMBEDDING_DIM)),
            DEFAULT_EMBEDDING_DIM,
            8,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backend(&self) -> &Arc<dyn ModelBackend> {
        &self.backend
    }

    async fn permit(&self, cap: Capability) -> tokio::sync::SemaphorePermit<'_> {
        self.permits[cap.index()]
            .acquire()
            .await
            .expect("gateway semaphores are never closed")
    }

    pub async fn embed_text(&self, text: &str) -> Result<UnitEmbedding> {
        let mut out = self.embed_texts(&[text.to_string()]).await?;
        Ok(out.remove(0))
    }

    pub async fn embed_texts(&self, texts: &[String]) -> Result<Vec<UnitEmbedding>> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::invalid(format!("text #{i} is empty")));
        }
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let raw = {
            let _permit = self.permit(Capability::EmbedText).await;
            self.backend.embed_texts(texts).await?
        };
        self.unit_vectors(Capability::EmbedText, raw, texts.len())
    }

    /// Embeds the whole image, or the crop when given. A crop covering the
    /// whole frame is the same request as no crop.
    pub async fn embed_image(
        &self,
        image: &ImageInput,
        crop: Option<&BoundingBox>,
    ) -> Result<UnitEmbedding> {
        let crop = canonical_crop(image, crop)?;
        let raw = {
            let _permit = self.permit(Capability::EmbedImage).await;
            match crop {
                Some(b) => self.backend.embed_image(image, Some(&[b])).await?,
                None => self.backend.embed_image(image, None).await?,
            }
        };
        let mut out = self.unit_vectors(Capability::EmbedImage, raw, 1)?;
        Ok(out.remove(0))
    }

    pub async fn embed_regions(
        &self,
        image: &ImageInput,
        boxes: &[BoundingBox],
    ) -> Result<Vec<UnitEmbedding>> {
        if boxes.is_empty() {
            return Ok(Vec::new());
        }
        let crops = canonical_crops(image, boxes)?;
        let raw = {
            let _permit = self.permit(Capability::EmbedImage).await;
            self.backend.embed_image(image, Some(&crops)).await?
        };
        self.unit_vectors(Capability::EmbedImage, raw, boxes.len())
    }

    /// Caption for the image or a crop. Empty captions come back as `None`.
    pub async fn caption(
        &self,
        image: &ImageInput,
        crop: Option<&BoundingBox>,
    ) -> Result<Option<String>> {
        let crop = canonical_crop(image, crop)?;
        let raw = {
            let _permit = self.permit(Capability::Caption).await;
            match crop {
                Some(b) => self.backend.caption(image, Some(&[b])).await?,
                None => self.backend.caption(image, None).await?,
            }
        };
        let mut out = self.captions_checked(raw, 1)?;
        Ok(out.remove(0))
    }

    pub async fn caption_regions(
        &self,
        image: &ImageInput,
        boxes: &[BoundingBox],
    ) -> Result<Vec<Option<String>>> {
        if boxes.is_empty() {
            return Ok(Vec::new());
        }
        let crops = canonical_crops(image, boxes)?;
        let raw = {
            let _permit = self.permit(Capability::Caption).await;
            self.backend.caption(image, Some(&crops)).await?
        };
        self.captions_checked(raw, boxes.len())
    }

    /// Boxes clamped to the frame, zero-area boxes dropped, sorted by
    /// descending score (stable).
    pub async fn detect(&self, image: &ImageInput) -> Result<Vec<BoundingBox>> {
        let raw = {
            let _permit = self.permit(Capability::Detect).await;
            self.backend.detect(image).await?
        };
        let mut boxes: Vec<BoundingBox> = raw
            .iter()
            .filter(|b| b.is_finite())
            .filter_map(|b| b.clamp_to(image.width(), image.height()))
            .collect();
        boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(boxes)
    }

    /// Exactly `n` completions. A short batch is topped up once; a second
    /// shortfall is a [`Error::PartialCompletion`].
    pub async fn complete(
        &self,
        prompt: &str,
        n: usize,
        params: &SamplingParams,
    ) -> Result<Vec<String>> {
        if prompt.trim().is_empty() {
            return Err(Error::invalid("prompt is empty"));
        }
        if n == 0 {
            return Err(Error::invalid("completion count must be at least 1"));
        }
        let mut out = {
            let _permit = self.permit(Capability::Complete).await;
            self.backend.complete(prompt, n, params).await?
        };
        if out.len() < n {
            let missing = n - out.len();
            tracing::warn!(
                received = out.len(),
                expected = n,
                "short completion batch, retrying"
            );
            let more = {
                let _permit = self.permit(Capability::Complete).await;
                self.backend.complete(prompt, missing, params).await?
            };
            out.extend(more);
            if out.len() < n {
                return Err(Error::PartialCompletion {
                    received: out.len(),
                    expected: n,
                });
            }
        }
        out.truncate(n);
        Ok(out)
    }

    fn unit_vectors(
        &self,
        cap: Capability,
        raw: Vec<Vec<f32>>,
        expected: usize,
    ) -> Result<Vec<UnitEmbedding>> {
        if raw.len() != expected {
            return Err(Error::backend(
                self.backend.endpoint(cap),
                format!("expected {expected} embeddings, got {}", raw.len()),
            ));
        }
        raw.iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(Error::backend(
                        self.backend.endpoint(cap),
                        format!(
                            "embedding dimension {} does not match configured {}",
                            v.len(),
                            self.dim
                        ),
                    ));
                }
                let unit = UnitEmbedding::normalize(v)
                    .map_err(|e| Error::backend(self.backend.endpoint(cap), e))?;
                debug_assert!((unit.norm() - 1.0).abs() <= NORM_TOLERANCE);
                Ok(unit)
            })
            .collect()
    }

    fn captions_checked(&self, raw: Vec<String>, expected: usize) -> Result<Vec<Option<String>>> {
        if raw.len() != expected {
            return Err(Error::backend(
                self.backend.endpoint(Capability::Caption),
                format!("expected {expected} captions, got {}", raw.len()),
            ));
        }
        Ok(raw
            .into_iter()
            .map(|c| {
                let c = c.trim();
                (!c.is_empty()).then(|| c.to_string())
            })
            .collect())
    }
}

fn canonical_crop(image: &ImageInput, crop: Option<&BoundingBox>) -> Result<Option<BoundingBox>> {
    let Some(b) = crop else { return Ok(None) };
    let clamped = b
        .clamp_to(image.width(), image.height())
        .ok_or_else(|| Error::invalid(format!("crop {b:?} has zero area inside the image")))?;
    if clamped.covers_frame(image.width(), image.height()) {
        Ok(None)
    } else {
        Ok(Some(clamped))
    }
}

fn canonical_crops(image: &ImageInput, boxes: &[BoundingBox]) -> Result<Vec<BoundingBox>> {
    boxes
        .iter()
        .map(|b| {
            b.clamp_to(image.width(), image.height())
                .ok_or_else(|| Error::invalid(format!("crop {b:?} has zero area inside the image")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(dim: usize, i: usize) -> UnitEmbedding {
        let mut v = vec![0.0f32; dim];
        v[i] = 1.0;
        UnitEmbedding::normalize(&v).unwrap()
    }

    #[test]
    fn orthogonal_basis_vectors_have_zero_similarity() {
        assert_eq!(similarity(&basis(4, 0), &basis(4, 1)).unwrap(), 0.0);
        assert_eq!(similarity(&basis(4, 2), &basis(4, 2)).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_invalid_input() {
        let err = similarity(&basis(4, 0), &basis(5, 0)).unwrap_err();
        assert!(err.is_invalid_input());
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        assert!(UnitEmbedding::normalize(&[0.0, 0.0]).is_err());
        assert!(UnitEmbedding::normalize(&[f32::NAN, 1.0]).is_err());
    }

    #[test]
    fn default_sampling_params() {
        let p = SamplingParams::default();
        assert_eq!(p.temperature, 0.8);
        assert_eq!(p.frequency_penalty, 0.5);
        assert_eq!(p.max_tokens, 100);
    }

    #[test]
    fn clamping_keeps_positive_area_only() {
        let b = BoundingBox::new(-10.0, -5.0, 50.0, 40.0, 1.3);
        let c = b.clamp_to(20, 20).unwrap();
        assert_eq!(
            (c.x_min, c.y_min, c.x_max, c.y_max, c.score),
            (0.0, 0.0, 20.0, 20.0, 1.0)
        );
        assert!(BoundingBox::new(30.0, 0.0, 40.0, 10.0, 0.5)
            .clamp_to(20, 20)
            .is_none());
    }

    #[test]
    fn iou_of_identical_boxes_is_one() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0, 0.9);
        assert_eq!(b.iou(&b), 1.0);
        let far = BoundingBox::new(20.0, 20.0, 30.0, 30.0, 0.9);
        assert_eq!(b.iou(&far), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::mock(1);
        assert!(c.validate().is_ok());
        c.timeout_ms = 0;
        assert!(c.validate().is_err());
        let mut c = BackendConfig::mock(1);
        c.max_in_flight = 0;
        assert!(c.validate().is_err());
        let remote = BackendConfig::default();
        assert!(remote.validate().is_err());
    }

    #[test]
    fn endpoint_urls() {
        let e = Endpoints::uniform("http://models:8080/");
        assert_eq!(e.url(Capability::Detect), "http://models:8080/v1/detect");
    }
}
