//! Turning one image into structured visual clues: global tags and
//! caption, plus a description for every detected region that some tag
//! names.

mod select;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage, StageExt};
use crate::gateway::{BoundingBox, Gateway, ImageInput, UnitEmbedding};

pub use select::{
    above_threshold, argmax, assign_attribute, nms, prune_small, region_tags, rows_above,
    select_regions, select_top_tags, top_m, DEFAULT_BETA, DEFAULT_IOU_THRESHOLD,
    DEFAULT_MIN_AREA_FRACTION, DEFAULT_NMS_KEEP, DEFAULT_TOP_TAGS,
};
pub use vocab::{parse_entries, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTag {
    pub tag: String,
    pub score: f64,
}

impl ScoredTag {
    pub fn new(tag: impl Into<String>, score: f64) -> Self {
        ScoredTag {
            tag: tag.into(),
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDescription {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub attribute: String,
    pub attribute_score: f64,
    /// Every tag scoring above the region threshold, best first.
    pub tags: Vec<ScoredTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualClues {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub tags: Vec<ScoredTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    pub regions: Vec<RegionDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
}

impl VisualClues {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("visual clues have a zero-size frame"));
        }
        if !self.tags.windows(2).all(|w| w[0].score >= w[1].score) {
            return Err(Error::invalid("tags are not sorted by descending score"));
        }
        for r in &self.regions {
            let b = &r.bbox;
            if b.x_min < 0.0
                || b.y_min < 0.0
                || b.x_max > f64::from(self.width)
                || b.y_max > f64::from(self.height)
                || b.area() <= 0.0
            {
                return Err(Error::invalid(format!(
                    "region box {b:?} is outside the frame"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClueParams {
    pub top_tags: usize,
    pub beta: f64,
    pub iou_threshold: f64,
    pub nms_keep: usize,
    pub min_area_fraction: f64,
    pub region_captions: bool,
}

impl Default for ClueParams {
    fn default() -> Self {
        ClueParams {
            top_tags: DEFAULT_TOP_TAGS,
            beta: DEFAULT_BETA,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            nms_keep: DEFAULT_NMS_KEEP,
            min_area_fraction: DEFAULT_MIN_AREA_FRACTION,
            region_captions: true,
        }
    }
}

impl ClueParams {
    pub fn validate(&self) -> Result<()> {
        if self.top_tags == 0 {
            return Err(Error::invalid("M must be at least 1"));
        }
        if !(-1.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid("beta must lie in [-1, 1]"));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::invalid("IoU threshold must lie in (0, 1]"));
        }
        if self.nms_keep == 0 {
            return Err(Error::invalid("NMS keep count must be at least 1"));
        }
        if !(self.min_area_fraction > 0.0 && self.min_area_fraction < 1.0) {
            return Err(Error::invalid("minimum area fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Clues plus the whole-image embedding computed on the way, which
/// candidate selection reuses.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub clues: VisualClues,
    pub image_embedding: UnitEmbedding,
}

pub async fn extract_clues(
    gateway: &Gateway,
    image: &ImageInput,
    tag_vocab: &Vocabulary,
    attr_vocab: &Vocabulary,
    params: &ClueParams,
) -> Result<VisualClues> {
    Ok(extract(gateway, image, tag_vocab, attr_vocab, params)
        .await?
        .clues)
}

/// detect → nms → prune → embed regions → select regions → per-region
/// attribute, tags and caption; global caption and top tags alongside.
pub async fn extract(
    gateway: &Gateway,
    image: &ImageInput,
    tag_vocab: &Vocabulary,
    attr_vocab: &Vocabulary,
    params: &ClueParams,
) -> Result<Extraction> {
    params.validate()?;
    let detected = gateway.detect(image).await.stage(Stage::Detect)?;
    let proposals = nms(&detected, params.iou_threshold, params.nms_keep);
    let boxes = prune_small(
        &proposals,
        image.width(),
        image.height(),
        params.min_area_fraction,
    );

    let (region_embs, caption, image_embedding) = tokio::try_join!(
        async {
            gateway
                .embed_regions(image, &boxes)
                .await
                .stage(Stage::EmbedRegions)
        },
        async {
            gateway
                .caption(image, None)
                .await
                .stage(Stage::GlobalCaption)
        },
        async {
            gateway
                .embed_image(image, None)
                .await
                .stage(Stage::EmbedImage)
        },
    )?;

    let selected = select_regions(&region_embs, tag_vocab, params.beta)?;
    let selected_boxes: Vec<BoundingBox> = selected.iter().map(|&i| boxes[i]).collect();
    let captions = if params.region_captions {
        gateway
            .caption_regions(image, &selected_boxes)
            .await
            .stage(Stage::RegionCaptions)?
    } else {
        vec![None; selected.len()]
    };

    let mut regions = Vec::with_capacity(selected.len());
    for ((&i, bbox), caption) in selected.iter().zip(selected_boxes).zip(captions) {
        let emb = &region_embs[i];
        let attribute = assign_attribute(emb, attr_vocab)?;
        let tags = region_tags(emb, tag_vocab, params.beta)?;
        regions.push(RegionDescription {
            bbox,
            attribute: attribute.tag,
            attribute_score: attribute.score,
            tags,
            caption,
        });
    }

    let tags = select_top_tags(&image_embedding, tag_vocab, params.top_tags)?;
    Ok(Extraction {
        clues: VisualClues {
            image: image.id().to_string(),
            width: image.width(),
            height: image.height(),
            tags,
            caption,
            regions,
            ocr_text: None,
        },
        image_embedding,
    })
}
