//! Serializing visual clues into a language-model prompt.
//!
//! Blocks appear in a fixed order, separated by blank lines: region
//! descriptions, optional scene text, caption, tags, and the task ending.
//! Boxes are described in words (one of nine locations and three sizes)
//! rather than coordinates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clues::{RegionDescription, VisualClues};
use crate::error::{Error, Result};
use crate::gateway::{BoundingBox, SamplingParams};

pub const DEFAULT_CANDIDATES: usize = 40;

pub const DESCRIBE_ENDING: &str = "Describe this image in detail:";
pub const STORY_ENDING: &str = "Tell me a creative story:";
pub const ADS_ENDING: &str =
    "Write a product description to sell in eBay or Amazon marketplace to get lots of engagement:";
pub const SOCIAL_ENDING: &str = "Social media post:";
pub const TEXTBOOK_ENDING: &str = "Textbook text:";
pub const OCR_PREFIX: &str = "This image contains text:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocationClass {
    UpperLeft,
    UpperMiddle,
    UpperRight,
    Left,
    Middle,
    Right,
    LowerLeft,
    LowerMiddle,
    LowerRight,
}

impl LocationClass {
    pub const ALL: [LocationClass; 9] = [
        LocationClass::UpperLeft,
        LocationClass::UpperMiddle,
        LocationClass::UpperRight,
        LocationClass::Left,
        LocationClass::Middle,
        LocationClass::Right,
        LocationClass::LowerLeft,
        LocationClass::LowerMiddle,
        LocationClass::LowerRight,
    ];

    fn from_cell(row: usize, col: usize) -> Self {
        Self::ALL[row * 3 + col]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LocationClass::UpperLeft => "upper left",
            LocationClass::UpperMiddle => "upper middle",
            LocationClass::UpperRight => "upper right",
            LocationClass::Left => "left",
            LocationClass::Middle => "middle",
            LocationClass::Right => "right",
            LocationClass::LowerLeft => "lower left",
            LocationClass::LowerMiddle => "lower middle",
            LocationClass::LowerRight => "lower right",
        }
    }
}

impl fmt::Display for LocationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeClass {
    Large,
    ModerateSized,
    Small,
}

impl SizeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Large => "large",
            SizeClass::ModerateSized => "moderate-sized",
            SizeClass::Small => "small",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Area-fraction cut points for [`SizeClass`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeThresholds {
    pub large: f64,
    pub moderate: f64,
}

impl Default for SizeThresholds {
    fn default() -> Self {
        SizeThresholds {
            large: 0.25,
            moderate: 0.05,
        }
    }
}

/// Grid cell index for a normalized coordinate: [0,1/3) → 0,
/// [1/3,2/3) → 1, [2/3,1] → 2.
fn cell(t: f64) -> usize {
    ((t * 3.0).floor().max(0.0) as usize).min(2)
}

/// Location of the box center on a 3×3 grid over the frame.
pub fn bucket_location(b: &BoundingBox, width: u32, height: u32) -> Result<LocationClass> {
    if b.area() <= 0.0 {
        return Err(Error::invalid(format!("box {b:?} has zero area")));
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("image has zero size"));
    }
    let (cx, cy) = b.center();
    let col = cell(cx / f64::from(width));
    let row = cell(cy / f64::from(height));
    Ok(LocationClass::from_cell(row, col))
}

pub fn bucket_size(
    b: &BoundingBox,
    width: u32,
    height: u32,
    thresholds: &SizeThresholds,
) -> SizeClass {
    let fraction = b.area() / (f64::from(width) * f64::from(height));
    if fraction >= thresholds.large {
        SizeClass::Large
    } else if fraction >= thresholds.moderate {
        SizeClass::ModerateSized
    } else {
        SizeClass::Small
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "lowercase")]
pub enum TaskEnding {
    Describe,
    Story,
    Ads,
    Social,
    Textbook,
    Vqa(String),
    Custom(String),
}

impl TaskEnding {
    /// Resolves an ending name: a built-in kind, `custom:<text>`, or any
    /// extra name defined in `table`.
    pub fn from_name(name: &str, table: &EndingTable) -> Result<Self> {
        let name = name.trim();
        Ok(match name {
            "describe" => TaskEnding::Describe,
            "story" => TaskEnding::Story,
            "ads" => TaskEnding::Ads,
            "social" => TaskEnding::Social,
            "textbook" => TaskEnding::Textbook,
            other => {
                if let Some(text) = other.strip_prefix("custom:") {
                    TaskEnding::Custom(text.trim().to_string())
                } else if table.contains(other) {
                    TaskEnding::Custom(table.get(other).to_string())
                } else {
                    return Err(Error::invalid(format!("unknown task ending `{other}`")));
                }
            }
        })
    }

    pub fn name(&self) -> &str {
        match self {
            TaskEnding::Describe => "describe",
            TaskEnding::Story => "story",
            TaskEnding::Ads => "ads",
            TaskEnding::Social => "social",
            TaskEnding::Textbook => "textbook",
            TaskEnding::Vqa(_) => "vqa",
            TaskEnding::Custom(_) => "custom",
        }
    }

    pub fn render(&self, table: &EndingTable) -> Result<String> {
        let text = match self {
            TaskEnding::Vqa(q) | TaskEnding::Custom(q) => q.trim().to_string(),
            named => table.get(named.name()).to_string(),
        };
        if text.is_empty() {
            return Err(Error::invalid(format!(
                "task ending `{}` renders empty",
                self.name()
            )));
        }
        Ok(text)
    }
}

/// Suffix text per named ending, with configurable overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EndingTable {
    overrides: BTreeMap<String, String>,
}

impl EndingTable {
    pub fn with_overrides(overrides: BTreeMap<String, String>) -> Self {
        EndingTable { overrides }
    }

    pub fn get<'a>(&'a self, name: &str) -> &'a str {
        if let Some(text) = self.overrides.get(name) {
            return text;
        }
        match name {
            "describe" => DESCRIBE_ENDING,
            "story" => STORY_ENDING,
            "ads" => ADS_ENDING,
            "social" => SOCIAL_ENDING,
            "textbook" => TEXTBOOK_ENDING,
            _ => "",
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        !self.get(name).is_empty()
    }
}

/// Everything that shapes the prompt text besides the clues.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PromptStyle {
    pub sizes: SizeThresholds,
    pub endings: EndingTable,
}

fn region_line(
    r: &RegionDescription,
    width: u32,
    height: u32,
    sizes: &SizeThresholds,
) -> Result<String> {
    let location = bucket_location(&r.bbox, width, height)?;
    let size = bucket_size(&r.bbox, width, height, sizes);
    let noun = r
        .tags
        .first()
        .map(|t| t.tag.as_str())
        .unwrap_or(&r.attribute);
    let mut line = String::new();
    if let Some(c) = &r.caption {
        line.push_str(c);
        line.push_str(". ");
    }
    line.push_str(&format!(
        "{noun}, is at {location} of the image and is {size} in the image. Attribute: {}",
        r.attribute
    ));
    Ok(line)
}

/// Renders the prompt. Byte-deterministic; lines joined by `\n` with no
/// trailing newline.
pub fn serialize(
    clues: &VisualClues,
    ending: &TaskEnding,
    include_caption: bool,
    style: &PromptStyle,
) -> Result<String> {
    let mut blocks: Vec<String> = Vec::new();
    if !clues.regions.is_empty() {
        let mut block = String::from("Objects in this image:");
        for r in &clues.regions {
            block.push('\n');
            block.push_str(&region_line(r, clues.width, clues.height, &style.sizes)?);
        }
        blocks.push(block);
    }
    if let Some(ocr) = clues
        .ocr_text
        .as_deref()
        .map(str::trim)
        .filter(|t| !t.is_empty())
    {
        blocks.push(format!("{OCR_PREFIX} {ocr}"));
    }
    if include_caption {
        if let Some(caption) = &clues.caption {
            blocks.push(format!("Caption:\n{caption}"));
        }
    }
    let tags: Vec<&str> = clues.tags.iter().map(|t| t.tag.as_str()).collect();
    blocks.push(format!("Tags:\nThis image is about {}", tags.join(", ")));
    blocks.push(ending.render(&style.endings)?);
    Ok(blocks.join("\n\n"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub prompt: String,
    pub params: SamplingParams,
    pub with_caption: bool,
}

/// `k` generation requests: the first half with the caption block, the
/// second half without. Without a caption every request is caption-free.
/// `k` must be even, except that `k == 1` yields a single captioned request.
pub fn synthesis_plan(
    clues: &VisualClues,
    ending: &TaskEnding,
    k: usize,
    params: &SamplingParams,
    style: &PromptStyle,
) -> Result<Vec<SynthesisRequest>> {
    if k == 0 || (k != 1 && !k.is_multiple_of(2)) {
        return Err(Error::invalid(format!(
            "candidate count K={k} must be even (or 1)"
        )));
    }
    let has_caption = clues.caption.is_some();
    let with = serialize(clues, ending, true, style)?;
    let without = if has_caption {
        serialize(clues, ending, false, style)?
    } else {
        with.clone()
    };
    let captioned = if k == 1 { 1 } else { k / 2 };
    Ok((0..k)
        .map(|i| {
            let with_caption = has_caption && i < captioned;
            SynthesisRequest {
                prompt: if with_caption {
                    with.clone()
                } else {
                    without.clone()
                },
                params: *params,
                with_caption,
            }
        })
        .collect())
}
