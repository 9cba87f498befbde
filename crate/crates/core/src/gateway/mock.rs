//! Deterministic offline backends.
//!
//! Every output is a pure function of the seed and the request. Text
//! embeddings are a bag of per-token pseudo-random vectors; image
//! embeddings are built from the same token vectors for a few concept words
//! chosen from the image digest, so tags that name those concepts score
//! well above the default thresholds while unrelated tags sit near zero.

use async_trait::async_trait;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{BoundingBox, Capability, ImageInput, ModelBackend, SamplingParams};
use crate::error::Result;

/// Nouns the mock image encoder can "see".
pub const MOCK_CONCEPTS: &[&str] = &[
    "dog",
    "cat",
    "man",
    "woman",
    "child",
    "bicycle",
    "car",
    "bus",
    "train",
    "tree",
    "grass",
    "sky",
    "cloud",
    "building",
    "street",
    "table",
    "chair",
    "cup",
    "coffee",
    "donut",
    "plate",
    "book",
    "backpack",
    "surfboard",
    "wave",
    "beach",
    "snow",
    "umbrella",
    "horse",
    "boat",
    "water",
    "mountain",
    "pizza",
    "phone",
    "window",
    "clock",
    "bird",
    "flower",
    "bench",
    "lamp",
];

/// Qualities the mock image encoder attaches to regions.
pub const MOCK_QUALITIES: &[&str] = &[
    "red", "blue", "green", "white", "black", "brown", "wooden", "metal", "striped", "shiny",
    "wet", "old",
];

const NOISE_WEIGHT: f32 = 0.5;

const TEMPLATE_WORDS: &[&str] = &[
    "objects",
    "image",
    "this",
    "about",
    "caption",
    "tags",
    "attribute",
    "describe",
    "detail",
    "the",
    "and",
    "mock",
    "large",
    "small",
    "moderate",
    "sized",
    "upper",
    "lower",
    "left",
    "right",
    "middle",
    "contains",
    "text",
    "question",
    "answer",
    "long",
    "short",
    "what",
    "with",
    "for",
    "are",
    "was",
    "that",
];

#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    dim: usize,
}

impl MockBackend {
    pub fn new(seed: u64, dim: usize) -> Self {
        MockBackend { seed, dim }
    }

    fn rng(&self, parts: &[&[u8]]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.hash(parts))
    }

    fn hash(&self, parts: &[&[u8]]) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }

    fn token_vector(&self, token: &str) -> Vec<f32> {
        let mut rng = self.rng(&[b"token", token.as_bytes()]);
        (0..self.dim)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect()
    }

    fn bag_of_tokens<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<f32> {
        let mut acc = vec![0.0f32; self.dim];
        for tok in tokens {
            for (a, v) in acc.iter_mut().zip(self.token_vector(tok)) {
                *a += v;
            }
        }
        acc
    }

    fn text_vector(&self, text: &str) -> Vec<f32> {
        let lowered = text.trim().to_lowercase();
        let tokens = tokenize(&lowered);
        if tokens.is_empty() {
            self.bag_of_tokens([lowered.as_str()])
        } else {
            self.bag_of_tokens(tokens)
        }
    }

    /// The concept pool for an image: five nouns and three qualities.
    fn pool(&self, image: &ImageInput) -> (Vec<&'static str>, Vec<&'static str>) {
        let mut rng = self.rng(&[b"pool", image.digest()]);
        let nouns = MOCK_CONCEPTS
            .choose_multiple(&mut rng, 5)
            .copied()
            .collect();
        let qualities = MOCK_QUALITIES
            .choose_multiple(&mut rng, 3)
            .copied()
            .collect();
        (nouns, qualities)
    }

    fn crop_key(image: &ImageInput, crop: Option<&BoundingBox>) -> Vec<u8> {
        match crop {
            Some(b) if !b.covers_frame(image.width(), image.height()) => {
                let mut key = Vec::with_capacity(32);
                for v in [b.x_min, b.y_min, b.x_max, b.y_max] {
                    key.extend_from_slice(&(v.round() as i64).to_le_bytes());
                }
                key
            }
            _ => b"full".to_vec(),
        }
    }

    fn image_vector(&self, image: &ImageInput, crop: Option<&BoundingBox>) -> Vec<f32> {
        let (nouns, qualities) = self.pool(image);
        let key = Self::crop_key(image, crop);
        let mut rng = self.rng(&[b"crop", image.digest(), &key]);
        let mut words: Vec<&str> = Vec::new();
        if key == b"full" {
            words.extend(&nouns[..3]);
            words.push(qualities[0]);
        } else {
            // Some regions show background only and name no concept.
            if rng.random_bool(0.75) {
                let count = rng.random_range(1..=2);
                words.extend(nouns.choose_multiple(&mut rng, count).copied());
            }
            words.push(qualities.choose(&mut rng).copied().unwrap_or("plain"));
        }
        let mut v = self.bag_of_tokens(words);
        for x in v.iter_mut() {
            *x += NOISE_WEIGHT * rng.random_range(-1.0f32..1.0);
        }
        v
    }

    fn caption_for(&self, image: &ImageInput, crop: Option<&BoundingBox>) -> String {
        let key = Self::crop_key(image, crop);
        let h = self.hash(&[b"caption", image.digest(), &key]);
        format!("mock caption {:08x}", h >> 32)
    }

    fn boxes_for(&self, image: &ImageInput) -> Vec<BoundingBox> {
        let (w, h) = (f64::from(image.width()), f64::from(image.height()));
        let mut rng = self.rng(&[b"detect", image.digest()]);
        let n = rng.random_range(5..=12);
        let mut boxes = Vec::with_capacity(n + 2);
        for _ in 0..n {
            let bw = rng.random_range(0.05..0.7) * w;
            let bh = rng.random_range(0.05..0.7) * h;
            let x0 = rng.random_range(0.0..(w - bw).max(1.0));
            let y0 = rng.random_range(0.0..(h - bh).max(1.0));
            let score = (rng.random_range(0.05..1.0f64) * 1000.0).round() / 1000.0;
            boxes.push(BoundingBox::new(
                x0.round(),
                y0.round(),
                (x0 + bw).round(),
                (y0 + bh).round(),
                score,
            ));
        }
        // A jittered duplicate for NMS to remove and a speck for pruning.
        let first = boxes[0];
        boxes.push(BoundingBox::new(
            first.x_min + 1.0,
            first.y_min + 1.0,
            first.x_max + 1.0,
            first.y_max + 1.0,
            first.score * 0.9,
        ));
        boxes.push(BoundingBox::new(0.0, 0.0, 2.0, 2.0, 0.99));
        boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
        boxes
    }

    fn completion(&self, prompt: &str, index: usize) -> String {
        let mut rng = self.rng(&[
            b"complete",
            prompt.as_bytes(),
            &(index as u64).to_le_bytes(),
        ]);
        let last = prompt
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("");
        if last.trim() == "Short answer:" {
            return short_answer(prompt, &mut rng);
        }
        let lowered = prompt.to_lowercase();
        let mut seen: Vec<&str> = Vec::new();
        for tok in tokenize(&lowered) {
            if tok.len() >= 3
                && tok.chars().all(|c| c.is_ascii_alphabetic())
                && !TEMPLATE_WORDS.contains(&tok)
                && !seen.contains(&tok)
            {
                seen.push(tok);
            }
        }
        let noun = |rng: &mut ChaCha8Rng| -> String {
            if seen.is_empty() || rng.random_bool(0.25) {
                MOCK_CONCEPTS
                    .choose(rng)
                    .copied()
                    .unwrap_or("thing")
                    .to_string()
            } else {
                seen.choose(rng).copied().unwrap_or("thing").to_string()
            }
        };
        let sentences = rng.random_range(3..=5);
        let mut out = Vec::with_capacity(sentences);
        for _ in 0..sentences {
            let a = noun(&mut rng);
            let b = noun(&mut rng);
            let q = MOCK_QUALITIES.choose(&mut rng).copied().unwrap_or("plain");
            let s = match rng.random_range(0..4) {
                0 => format!("There is a {a} in the image."),
                1 => format!("The {a} is next to the {b}."),
                2 => format!("A {q} {a} can be seen in the picture."),
                _ => format!("It looks like the {a} belongs to someone nearby."),
            };
            out.push(s);
        }
        out.join(" ")
    }
}

fn short_answer(prompt: &str, rng: &mut ChaCha8Rng) -> String {
    let long = prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Long answer:"))
        .unwrap_or("")
        .to_lowercase();
    let words: Vec<&str> = tokenize(&long)
        .into_iter()
        .filter(|w| w.len() >= 3 && !TEMPLATE_WORDS.contains(w))
        .collect();
    let word = words.choose(rng).copied().unwrap_or("yes");
    let mut chars = word.chars();
    let capitalized: String = match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    };
    format!("{capitalized}.")
}

fn tokenize(lowered: &str) -> Vec<&str> {
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect()
}

#[async_trait]
impl ModelBackend for MockBackend {
    fn endpoint(&self, cap: Capability) -> String {
        format!("mock(seed={}){}", self.seed, cap.path())
    }

    async fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.text_vector(t)).collect())
    }

    async fn embed_image(
        &self,
        image: &ImageInput,
        crops: Option<&[BoundingBox]>,
    ) -> Result<Vec<Vec<f32>>> {
        Ok(match crops {
            None => vec![self.image_vector(image, None)],
            Some(boxes) => boxes
                .iter()
                .map(|b| self.image_vector(image, Some(b)))
                .collect(),
        })
    }

    async fn caption(
        &self,
        image: &ImageInput,
        crops: Option<&[BoundingBox]>,
    ) -> Result<Vec<String>> {
        Ok(match crops {
            None => vec![self.caption_for(image, None)],
            Some(boxes) => boxes
                .iter()
                .map(|b| self.caption_for(image, Some(b)))
                .collect(),
        })
    }

    async fn detect(&self, image: &ImageInput) -> Result<Vec<BoundingBox>> {
        Ok(self.boxes_for(image))
    }

    async fn complete(
        &self,
        prompt: &str,
        n: usize,
        _params: &SamplingParams,
    ) -> Result<Vec<String>> {
        Ok((0..n).map(|i| self.completion(prompt, i)).collect())
    }
}
