//! Picking the candidate paragraph that best matches the image, then
//! dropping its sentences that the image does not support.

use serde::{Deserialize, Serialize};

use crate::clues::argmax;
use crate::error::{Error, Result};
use crate::gateway::{Gateway, UnitEmbedding};

pub const DEFAULT_GAMMA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    WithCaption,
    WithoutCaption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub text: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateParagraph {
    pub text: String,
    pub similarity: f64,
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentences: Vec<ScoredSentence>,
}

/// Index of the highest similarity; lowest index on ties.
pub fn best_index(similarities: &[f64]) -> Result<usize> {
    argmax(similarities).ok_or_else(|| Error::invalid("no candidates to select from"))
}

/// Scores every candidate against the image and returns the winner's index
/// with all similarities.
pub async fn select_best(
    gateway: &Gateway,
    image_emb: &UnitEmbedding,
    candidates: &[String],
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates to select from"));
    }
    let embs = gateway.embed_texts(candidates).await?;
    let sims = embs
        .iter()
        .map(|e| image_emb.similarity(e))
        .collect::<Result<Vec<_>>>()?;
    Ok((best_index(&sims)?, sims))
}

/// Splits after `.`, `!` or `?` when followed by whitespace or the end of
/// the text. Delimiters stay with their sentence; empty pieces are dropped.
/// No abbreviation handling.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                push_trimmed(&mut out, &text[start..end]);
                start = end;
            }
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

/// Indices of sentences scoring strictly above `gamma`, in order. When none
/// pass, the single best sentence is kept so the output is never empty
/// (unless there were no sentences at all).
pub fn keep_sentences(similarities: &[f64], gamma: f64) -> Vec<usize> {
    let kept: Vec<usize> = (0..similarities.len())
        .filter(|&i| similarities[i] > gamma)
        .collect();
    if kept.is_empty() {
        argmax(similarities).into_iter().collect()
    } else {
        kept
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub scored: Vec<ScoredSentence>,
    pub kept: Vec<usize>,
}

impl Filtered {
    pub fn kept_text(&self) -> Vec<String> {
        self.kept
            .iter()
            .map(|&i| self.scored[i].text.clone())
            .collect()
    }
}

pub async fn filter_sentences(
    gateway: &Gateway,
    image_emb: &UnitEmbedding,
    sentences: &[String],
    gamma: f64,
) -> Result<Filtered> {
    if sentences.is_empty() {
        return Err(Error::invalid("no sentences to filter"));
    }
    if !(-1.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma must lie in [-1, 1]"));
    }
    let embs = gateway.embed_texts(sentences).await?;
    let scored = sentences
        .iter()
        .zip(&embs)
        .map(|(s, e)| {
            Ok(ScoredSentence {
                text: s.clone(),
                similarity: image_emb.similarity(e)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sims: Vec<f64> = scored.iter().map(|s| s.similarity).collect();
    let kept = keep_sentences(&sims, gamma);
    Ok(Filtered { scored, kept })
}
