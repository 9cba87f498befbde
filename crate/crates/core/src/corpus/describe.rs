//! Paragraph generation over an image corpus.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::clues::{extract, ClueParams, VisualClues, Vocabulary};
use crate::error::{Error, Result, Stage, StageExt};
use crate::gateway::{Gateway, ImageInput, SamplingParams};
use crate::judge::{
    filter_sentences, select_best, split_sentences, CandidateParagraph, CandidateSource,
    ScoredSentence,
};
use crate::prompt::{synthesis_plan, PromptStyle, SynthesisRequest, TaskEnding};

/// Everything produced for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub image: String,
    pub clues: VisualClues,
    /// Distinct prompts in plan order: the captioned one first when there
    /// is a caption.
    pub prompts: Vec<String>,
    pub candidates: Vec<CandidateParagraph>,
    pub selected: usize,
    /// Sentences of the selected candidate with their similarities.
    pub sentences: Vec<ScoredSentence>,
    /// Indices into `sentences` that survived filtering.
    pub kept: Vec<usize>,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, u64>>,
}

impl RunRecord {
    /// Recomputes the selection from the recorded similarities.
    pub fn check(&self) -> Result<()> {
        let sims: Vec<f64> = self.candidates.iter().map(|c| c.similarity).collect();
        let best = crate::judge::best_index(&sims)?;
        if best != self.selected {
            return Err(Error::invalid(format!(
                "recorded selection {} but similarities pick {best}",
                self.selected
            )));
        }
        if self.description.trim().is_empty() {
            return Err(Error::invalid("description is empty"));
        }
        Ok(())
    }
}

/// A per-image failure line in the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub image: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputLine {
    Record(Box<RunRecord>),
    Failure(FailureRecord),
}

/// Shared state for describing images.
#[derive(Debug, Clone)]
pub struct Describer {
    pub gateway: Gateway,
    pub tags: Arc<Vocabulary>,
    pub attributes: Arc<Vocabulary>,
    pub clue_params: ClueParams,
    pub style: PromptStyle,
    pub ending: TaskEnding,
    pub candidates: usize,
    pub sampling: SamplingParams,
    pub gamma: f64,
    /// Record per-stage wall-clock timings. Off for reproducible output.
    pub timings: bool,
}

impl Describer {
    /// Builds the gateway and loads both vocabularies from `config`.
    pub async fn from_config(config: &RunConfig) -> Result<Self> {
        let gateway = Gateway::from_config(&config.backend_config()?)?;
        Self::with_gateway(config, gateway).await
    }

    pub async fn with_gateway(config: &RunConfig, gateway: Gateway) -> Result<Self> {
        let tags = load_vocab(config, &gateway, &config.vocab.tags, "vocab.tags").await?;
        let attributes = load_vocab(
            config,
            &gateway,
            &config.vocab.attributes,
            "vocab.attributes",
        )
        .await?;
        Ok(Describer {
            gateway,
            tags: Arc::new(tags),
            attributes: Arc::new(attributes),
            clue_params: config.clue_params(),
            style: config.prompt_style(),
            ending: config.ending()?,
            candidates: config.params.candidates,
            sampling: config.sampling,
            gamma: config.params.gamma,
            timings: !config.is_mock(),
        })
    }

    /// Clues, K candidates, selection and filtering for one image.
    pub async fn describe(
        &self,
        image: &ImageInput,
        ocr_text: Option<String>,
    ) -> Result<RunRecord> {
        let mut timings = BTreeMap::new();
        let mut clock = Instant::now();
        let mut lap = |name: &str, timings: &mut BTreeMap<String, u64>| {
            timings.insert(name.to_string(), clock.elapsed().as_millis() as u64);
            clock = Instant::now();
        };

        let extraction = extract(
            &self.gateway,
            image,
            &self.tags,
            &self.attributes,
            &self.clue_params,
        )
        .await?;
        let mut clues = extraction.clues;
        clues.ocr_text = ocr_text.filter(|t| !t.trim().is_empty());
        lap("clues", &mut timings);

        let plan = synthesis_plan(
            &clues,
            &self.ending,
            self.candidates,
            &self.sampling,
            &self.style,
        )
        .stage(Stage::Synthesis)?;
        let (prompts, texts) = self.run_plan(&plan).await.stage(Stage::Synthesis)?;
        lap("synthesis", &mut timings);

        let (selected, sims) = select_best(&self.gateway, &extraction.image_embedding, &texts)
            .await
            .stage(Stage::Selection)?;
        let candidates = texts
            .into_iter()
            .zip(&plan)
            .zip(sims)
            .map(|((text, req), similarity)| CandidateParagraph {
                text,
                similarity,
                source: if req.with_caption {
                    CandidateSource::WithCaption
                } else {
                    CandidateSource::WithoutCaption
                },
                sentences: Vec::new(),
            })
            .collect::<Vec<_>>();
        lap("selection", &mut timings);

        let sentences = split_sentences(&candidates[selected].text);
        if sentences.is_empty() {
            return Err(Error::invalid("selected candidate has no text")).stage(Stage::Filtering);
        }
        let filtered = filter_sentences(
            &self.gateway,
            &extraction.image_embedding,
            &sentences,
            self.gamma,
        )
        .await
        .stage(Stage::Filtering)?;
        let description = filtered.kept_text().join(" ");
        lap("filtering", &mut timings);

        Ok(RunRecord {
            image: image.id().to_string(),
            clues,
            prompts,
            candidates,
            selected,
            sentences: filtered.scored,
            kept: filtered.kept,
            description,
            timings_ms: self.timings.then_some(timings),
        })
    }

    /// Runs the plan with one completion call per distinct prompt, asking
    /// for as many completions as the plan has copies of it. Candidates come
    /// back in plan order.
    async fn run_plan(&self, plan: &[SynthesisRequest]) -> Result<(Vec<String>, Vec<String>)> {
        let mut groups: Vec<(&SynthesisRequest, usize)> = Vec::new();
        for req in plan {
            match groups.iter_mut().find(|(r, _)| r.prompt == req.prompt) {
                Some((_, n)) => *n += 1,
                None => groups.push((req, 1)),
            }
        }
        let batches = futures::future::try_join_all(
            groups
                .iter()
                .map(|(req, n)| self.gateway.complete(&req.prompt, *n, &req.params)),
        )
        .await?;
        let mut pools: Vec<std::vec::IntoIter<String>> =
            batches.into_iter().map(Vec::into_iter).collect();
        let mut texts = Vec::with_capacity(plan.len());
        for req in plan {
            let g = groups
                .iter()
                .position(|(r, _)| r.prompt == req.prompt)
                .expect("every request belongs to a group");
            texts.push(pools[g].next().expect("gateway returns exactly n"));
        }
        let prompts = groups.iter().map(|(r, _)| r.prompt.clone()).collect();
        Ok((prompts, texts))
    }
}

async fn load_vocab(
    config: &RunConfig,
    gateway: &Gateway,
    path: &Option<PathBuf>,
    what: &str,
) -> Result<Vocabulary> {
    let path = config.required(path, what)?;
    let cache = config.cache_path(path);
    if let Some(dir) = cache.as_deref().and_then(Path::parent) {
        std::fs::create_dir_all(dir)?;
    }
    let vocab = Vocabulary::load(path, gateway, cache.as_deref())
        .await
        .stage(Stage::Vocabulary)?;
    if vocab.is_empty() {
        return Err(Error::Config(format!("{} has no entries", path.display())));
    }
    Ok(vocab)
}

/// Image files of a corpus: every png/jpg/jpeg in a directory sorted by
/// file name, or the paths listed one per line in a text file (relative to
/// the list, `#` comments allowed).
pub fn image_set(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_path(p))
            .collect();
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        return Ok(files);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read image list {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

fn is_image_path(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

/// OCR text for an image, read from `<stem>.ocr.txt` beside it.
pub fn ocr_sidecar(image: &Path) -> Option<String> {
    let text = std::fs::read_to_string(image.with_extension("ocr.txt")).ok()?;
    let text = text.trim();
    (!text.is_empty()).then(|| text.to_string())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub records: usize,
    pub failures: usize,
}

/// Describes every image, at most `parallelism` at a time, writing one JSON
/// line per image in input order. Per-image failures become failure lines.
pub async fn describe_corpus<W: Write>(
    describer: &Describer,
    images: &[PathBuf],
    parallelism: usize,
    out: &mut W,
) -> Result<CorpusSummary> {
    let mut summary = CorpusSummary::default();
    let mut results = stream::iter(images.iter().cloned())
        .map(|path| async move {
            let id = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            let result = async {
                let image = ImageInput::from_path(&path)?;
                describer.describe(&image, ocr_sidecar(&path)).await
            }
            .await;
            (id, result)
        })
        .buffered(parallelism.max(1));
    while let Some((id, result)) = results.next().await {
        let line = match result {
            Ok(record) => {
                summary.records += 1;
                OutputLine::Record(Box::new(record))
            }
            Err(e) => {
                tracing::warn!(image = %id, error = %e, "image failed");
                summary.failures += 1;
                OutputLine::Failure(FailureRecord {
                    image: id,
                    error: e.to_string(),
                })
            }
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_png(dir: &Path, name: &str, w: u32, h: u32, shade: u8) -> PathBuf {
        let img = image::RgbImage::from_fn(w, h, |x, y| {
            image::Rgb([shade, (x * 7 % 256) as u8, (y * 3 % 256) as u8])
        });
        let path = dir.join(name);
        img.save(&path).unwrap();
        path
    }

    fn config(dir: &Path) -> RunConfig {
        std::fs::write(
            dir.join("tags.txt"),
            "dog\ncat\ntree\ngrass\nsky\ncar\nbicycle\nman\n",
        )
        .unwrap();
        std::fs::write(dir.join("attrs.txt"), "red\nblue\nwooden\nold\n").unwrap();
        let c = RunConfig::parse(
            "[vocab]\ntags = \"tags.txt\"\nattributes = \"attrs.txt\"\n[params]\ncandidates = 6\n",
            dir,
        )
        .unwrap()
        .with_mock_seed(7);
        c.validate().unwrap();
        c
    }

    #[tokio::test]
    async fn one_record_per_image_with_failures_in_place() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path());
        let d = Describer::from_config(&c).await.unwrap();
        let a = write_png(dir.path(), "a.png", 96, 64, 10);
        let bad = dir.path().join("b.png");
        std::fs::write(&bad, b"not an image").unwrap();
        let z = write_png(dir.path(), "z.png", 64, 64, 200);
        let mut out = Vec::new();
        let s = describe_corpus(&d, &[a, bad, z], 3, &mut out)
            .await
            .unwrap();
        assert_eq!(
            s,
            CorpusSummary {
                records: 2,
                failures: 1
            }
        );
        let lines: Vec<OutputLine> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert!(matches!(&lines[1], OutputLine::Failure(f) if f.image == "b.png"));
        for (line, id) in [(&lines[0], "a.png"), (&lines[2], "z.png")] {
            let OutputLine::Record(r) = line else {
                panic!("expected a record")
            };
            assert_eq!(r.image, id);
            assert_eq!(r.candidates.len(), 6);
            assert!(r.timings_ms.is_none());
            r.check().unwrap();
        }
    }

    #[tokio::test]
    async fn empty_corpus_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let d = Describer::from_config(&config(dir.path())).await.unwrap();
        let mut out = Vec::new();
        let s = describe_corpus(&d, &[], 2, &mut out).await.unwrap();
        assert_eq!(s, CorpusSummary::default());
        assert!(out.is_empty());
    }

    #[tokio::test]
    async fn output_is_independent_of_parallelism() {
        let dir = tempfile::tempdir().unwrap();
        let d = Describer::from_config(&config(dir.path())).await.unwrap();
        let images: Vec<PathBuf> = (0..4)
            .map(|i| {
                write_png(
                    dir.path(),
                    &format!("{i}.png"),
                    40 + i * 8,
                    48,
                    i as u8 * 40,
                )
            })
            .collect();
        let mut serial = Vec::new();
        describe_corpus(&d, &images, 1, &mut serial).await.unwrap();
        let mut parallel = Vec::new();
        describe_corpus(&d, &images, 4, &mut parallel)
            .await
            .unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn image_set_from_dir_and_list() {
        let dir = tempfile::tempdir().unwrap();
        write_png(dir.path(), "b.png", 4, 4, 0);
        write_png(dir.path(), "a.jpg", 4, 4, 0);
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let names: Vec<_> = image_set(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.jpg", "b.png"]);
        let list = dir.path().join("list.txt");
        std::fs::write(&list, "# corpus\nb.png\n\na.jpg\n").unwrap();
        assert_eq!(
            image_set(&list).unwrap(),
            vec![dir.path().join("b.png"), dir.path().join("a.jpg")]
        );
    }
}
