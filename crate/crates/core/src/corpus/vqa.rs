//! Answering and scoring a VQA dataset.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::describe::{ocr_sidecar, Describer};
use crate::clues::{extract, VisualClues};
use crate::error::{Error, Result};
use crate::gateway::ImageInput;
use crate::vqa::{
    answer_question, discriminative_answer, reformat_answer, score_accuracy, AnswerIndex, Mode,
    VqaItem,
};

#[derive(Debug, Clone)]
pub struct VqaRunner {
    pub describer: Describer,
    pub images: PathBuf,
    pub index: Option<Arc<AnswerIndex>>,
}

/// One output line: the answered item or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VqaLine {
    Answered(VqaItem),
    Failed {
        image: String,
        question: String,
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaReport {
    pub mode: Mode,
    /// Accuracy over answered items.
    pub accuracy: f64,
    pub answered: usize,
    pub failed: usize,
}

impl VqaReport {
    pub fn summary(&self) -> String {
        let mode = match self.mode {
            Mode::Generative => "Generative",
            Mode::Discriminative => "Discriminative",
        };
        format!(
            "{mode} accuracy: {:.2} ({} answered, {} failed)\n",
            self.accuracy * 100.0,
            self.answered,
            self.failed
        )
    }
}

impl VqaRunner {
    pub async fn from_config(config: &RunConfig, mode: Mode) -> Result<Self> {
        let describer = Describer::from_config(config).await?;
        let images = config
            .required(&config.vqa.images, "vqa.images")?
            .to_path_buf();
        let index = match (mode, &config.vqa.answers) {
            (Mode::Discriminative, None) => {
                return Err(Error::Config(
                    "discriminative mode needs vqa.answers".into(),
                ))
            }
            (Mode::Discriminative, Some(path)) => {
                let index = AnswerIndex::load(path, &describer.gateway).await?;
                if index.is_empty() {
                    return Err(Error::Config(format!("{} has no answers", path.display())));
                }
                Some(Arc::new(index))
            }
            (Mode::Generative, _) => None,
        };
        Ok(VqaRunner {
            describer,
            images,
            index,
        })
    }

    fn image_path(&self, id: &str) -> PathBuf {
        let direct = self.images.join(id);
        if direct.is_file() || Path::new(id).extension().is_some() {
            return direct;
        }
        ["png", "jpg", "jpeg"]
            .iter()
            .map(|ext| self.images.join(format!("{id}.{ext}")))
            .find(|p| p.is_file())
            .unwrap_or(direct)
    }

    async fn clues(&self, id: &str) -> Result<VisualClues> {
        let path = self.image_path(id);
        let image = ImageInput::from_path(&path)?;
        let d = &self.describer;
        let mut clues = extract(&d.gateway, &image, &d.tags, &d.attributes, &d.clue_params)
            .await?
            .clues;
        clues.ocr_text = ocr_sidecar(&path);
        Ok(clues)
    }

    async fn answer(&self, clues: &VisualClues, mut item: VqaItem, mode: Mode) -> Result<VqaItem> {
        let d = &self.describer;
        let long =
            answer_question(&d.gateway, clues, &item.question, &d.sampling, &d.style).await?;
        let short = reformat_answer(&d.gateway, &item.question, &long).await?;
        if mode == Mode::Discriminative {
            let index = self
                .index
                .as_deref()
                .ok_or_else(|| Error::Config("no answer index loaded".into()))?;
            item.final_answer = Some(discriminative_answer(&d.gateway, &short, index).await?);
        }
        item.long_answer = Some(long);
        item.short_answer = Some(short);
        Ok(item)
    }

    /// Answers every item, at most `parallelism` images or questions at a
    /// time. Clues are extracted once per distinct image. Lines come back in
    /// dataset order.
    pub async fn run(
        &self,
        items: Vec<VqaItem>,
        mode: Mode,
        parallelism: usize,
    ) -> Result<(Vec<VqaLine>, VqaReport)> {
        if items.is_empty() {
            return Err(Error::invalid("the VQA dataset is empty"));
        }
        let mut distinct: Vec<String> = Vec::new();
        for item in &items {
            if !distinct.contains(&item.image) {
                distinct.push(item.image.clone());
            }
        }
        let clue_results: Vec<(String, std::result::Result<VisualClues, String>)> =
            stream::iter(distinct)
                .map(|id| async move {
                    let r = self.clues(&id).await.map_err(|e| e.to_string());
                    (id, r)
                })
                .buffered(parallelism.max(1))
                .collect()
                .await;
        let clues: HashMap<String, std::result::Result<VisualClues, String>> =
            clue_results.into_iter().collect();

        let lines: Vec<VqaLine> = stream::iter(items)
            .map(|item| {
                let clues = &clues;
                async move {
                    let failed = |item: &VqaItem, error: String| VqaLine::Failed {
                        image: item.image.clone(),
                        question: item.question.clone(),
                        error,
                    };
                    match &clues[&item.image] {
                        Err(e) => failed(&item, e.clone()),
                        Ok(c) => {
                            let copy = item.clone();
                            match self.answer(c, item, mode).await {
                                Ok(done) => VqaLine::Answered(done),
                                Err(e) => failed(&copy, e.to_string()),
                            }
                        }
                    }
                }
            })
            .buffered(parallelism.max(1))
            .collect()
            .await;

        let answered: Vec<VqaItem> = lines
            .iter()
            .filter_map(|l| match l {
                VqaLine::Answered(i) => Some(i.clone()),
                VqaLine::Failed { .. } => None,
            })
            .collect();
        let failed = lines.len() - answered.len();
        let accuracy = if answered.is_empty() {
            0.0
        } else {
            score_accuracy(&answered, mode)?
        };
        let report = VqaReport {
            mode,
            accuracy,
            answered: answered.len(),
            failed,
        };
        Ok((lines, report))
    }
}
