//! Visual question answering from clues, with generative (reformatted
//! short answer) and discriminative (nearest known answer) scoring.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clues::VisualClues;
use crate::error::{Error, Result, Stage, StageExt};
use crate::gateway::{Gateway, SamplingParams, UnitEmbedding};
use crate::prompt::{serialize, PromptStyle, TaskEnding};

/// Few-shot prefix for turning a long answer into a short one. Fixed for
/// every question.
pub const REFORMAT_EXAMPLES: &str = "Question: What is this bird called?\n\
Long answer: The bird in this image is called a cockatoo.\n\
Short answer: Cockatoo.\n\
\n\
Question: Is the chair on the left or on the right of the desk?\n\
Long answer: The chair is on the left of the desk.\n\
Short answer: Left.";

/// Sampling for the reformat step: greedy and short.
pub const REFORMAT_PARAMS: SamplingParams = SamplingParams {
    temperature: 0.0,
    frequency_penalty: 0.0,
    max_tokens: 20,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaItem {
    pub image: String,
    pub question: String,
    #[serde(rename = "answer")]
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
}

impl VqaItem {
    pub fn new(image: &str, question: &str, ground_truth: &str) -> Self {
        VqaItem {
            image: image.to_string(),
            question: question.to_string(),
            ground_truth: ground_truth.to_string(),
            long_answer: None,
            short_answer: None,
            final_answer: None,
        }
    }
}

/// Reads a JSONL dataset; blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<VqaItem>> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: VqaItem =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if item.question.trim().is_empty() {
            return Err(Error::parse(i + 1, "question is empty"));
        }
        items.push(item);
    }
    Ok(items)
}

fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Known answers with their text embeddings.
#[derive(Debug, Clone)]
pub struct AnswerIndex {
    answers: Vec<String>,
    embeddings: Vec<UnitEmbedding>,
}

impl AnswerIndex {
    /// Keeps the first spelling of answers that are equal after trimming
    /// and lowercasing; blank answers are dropped.
    pub fn dedup(answers: impl IntoIterator<Item = String>) -> Vec<String> {
        let mut seen = HashSet::new();
        answers
            .into_iter()
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty() && seen.insert(normalize_answer(a)))
            .collect()
    }

    pub fn from_parts(answers: Vec<String>, embeddings: Vec<UnitEmbedding>) -> Result<Self> {
        if answers.len() != embeddings.len() {
            return Err(Error::invalid(format!(
                "{} answers but {} embeddings",
                answers.len(),
                embeddings.len()
            )));
        }
        if Self::dedup(answers.iter().cloned()).len() != answers.len() {
            return Err(Error::invalid(
                "answer index has duplicate or blank answers",
            ));
        }
        Ok(AnswerIndex {
            answers,
            embeddings,
        })
    }

    pub async fn build(
        answers: impl IntoIterator<Item = String>,
        gateway: &Gateway,
    ) -> Result<Self> {
        let answers = Self::dedup(answers);
        let embeddings = gateway.embed_texts(&answers).await?;
        Ok(AnswerIndex {
            answers,
            embeddings,
        })
    }

    /// One answer per line.
    pub async fn load(path: &Path, gateway: &Gateway) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read answer index {}: {e}", path.display()))
        })?;
        Self::build(text.lines().map(str::to_string), gateway).await
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    /// The answer most similar to `query`; ties go to the lexicographically
    /// smallest answer.
    pub fn nearest(&self, query: &UnitEmbedding) -> Result<&str> {
        let mut best: Option<(f64, &str)> = None;
        for (a, e) in self.answers.iter().zip(&self.embeddings) {
            let s = query.similarity(e)?;
            best = match best {
                Some((bs, ba)) if bs > s || (bs == s && ba <= a.as_str()) => Some((bs, ba)),
                _ => Some((s, a)),
            };
        }
        best.map(|(_, a)| a)
            .ok_or_else(|| Error::invalid("answer index is empty"))
    }
}

/// Long-form answer: the clue prompt with the question as its ending,
/// completed once.
pub async fn answer_question(
    gateway: &Gateway,
    clues: &VisualClues,
    question: &str,
    params: &SamplingParams,
    style: &PromptStyle,
) -> Result<String> {
    if question.trim().is_empty() {
        return Err(Error::invalid("question is empty"));
    }
    let prompt = serialize(clues, &TaskEnding::Vqa(question.to_string()), true, style)?;
    let mut out = gateway
        .complete(&prompt, 1, params)
        .await
        .stage(Stage::Answer)?;
    Ok(out.remove(0).trim().to_string())
}

pub fn reformat_prompt(question: &str, long_answer: &str) -> String {
    format!(
        "{REFORMAT_EXAMPLES}\n\nQuestion: {}\nLong answer: {}\nShort answer:",
        question.trim(),
        long_answer.trim()
    )
}

/// First line of a completion, without trailing periods or whitespace.
pub fn clean_short_answer(completion: &str) -> String {
    let first = completion.trim_start().lines().next().unwrap_or("");
    first
        .trim_end()
        .trim_end_matches('.')
        .trim_end()
        .to_string()
}

pub async fn reformat_answer(
    gateway: &Gateway,
    question: &str,
    long_answer: &str,
) -> Result<String> {
    if question.trim().is_empty() || long_answer.trim().is_empty() {
        return Err(Error::invalid("question and long answer must be non-empty"));
    }
    let prompt = reformat_prompt(question, long_answer);
    let mut out = gateway
        .complete(&prompt, 1, &REFORMAT_PARAMS)
        .await
        .stage(Stage::Reformat)?;
    Ok(clean_short_answer(&out.remove(0)))
}

pub async fn discriminative_answer(
    gateway: &Gateway,
    short_answer: &str,
    index: &AnswerIndex,
) -> Result<String> {
    if index.is_empty() {
        return Err(Error::invalid("answer index is empty"));
    }
    if short_answer.trim().is_empty() {
        return Err(Error::invalid("short answer is empty"));
    }
    let query = gateway.embed_text(short_answer).await?;
    Ok(index.nearest(&query)?.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Generative,
    Discriminative,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generative" => Ok(Mode::Generative),
            "discriminative" => Ok(Mode::Discriminative),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected generative or discriminative)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Generative => "generative",
            Mode::Discriminative => "discriminative",
        })
    }
}

/// Share of items whose answer for `mode` equals the ground truth after
/// trimming and lowercasing.
pub fn score_accuracy(items: &[VqaItem], mode: Mode) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::invalid("no items to score"));
    }
    let mut hits = 0usize;
    for (i, item) in items.iter().enumerate() {
        let answer = match mode {
            Mode::Generative => item.short_answer.as_deref(),
            Mode::Discriminative => item.final_answer.as_deref(),
        }
        .ok_or_else(|| Error::invalid(format!("item #{i} has no {mode} answer")))?;
        if normalize_answer(answer) == normalize_answer(&item.ground_truth) {
            hits += 1;
        }
    }
    Ok(hits as f64 / items.len() as f64)
}
