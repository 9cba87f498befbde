//! Run configuration, read from a TOML file.
//!
//! ```toml
//! [backend]
//! kind = "remote"            # or "mock" with `seed = 7`
//! url = "http://localhost:9000"
//! # per-capability overrides: embed_text, embed_image, caption, detect, complete
//! timeout_ms = 30000
//! max_in_flight = 8
//! dim = 512
//! bearer_token_env = "BEST_API_TOKEN"
//!
//! [vocab]
//! tags = "vocab/tags.txt"
//! attributes = "vocab/attributes.txt"
//! cache_dir = "cache"
//!
//! [params]
//! top_tags = 5
//! beta = 0.2
//! gamma = 0.2
//! candidates = 40
//!
//! [task]
//! ending = "describe"
//!
//! [endings]
//! poem = "Write a poem about this image:"
//!
//! [vqa]
//! images = "images"
//! answers = "answers.txt"
//!
//! [run]
//! parallelism = 4
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clues::{
    ClueParams, DEFAULT_BETA, DEFAULT_IOU_THRESHOLD, DEFAULT_MIN_AREA_FRACTION, DEFAULT_NMS_KEEP,
    DEFAULT_TOP_TAGS,
};
use crate::error::{Error, Result};
use crate::gateway::{
    BackendConfig, BackendKind, Capability, Endpoints, SamplingParams, DEFAULT_EMBEDDING_DIM,
};
use crate::judge::DEFAULT_GAMMA;
use crate::prompt::{EndingTable, PromptStyle, SizeThresholds, TaskEnding, DEFAULT_CANDIDATES};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendSection,
    pub vocab: VocabSection,
    pub params: ParamsSection,
    pub sampling: SamplingParams,
    pub task: TaskSection,
    pub endings: BTreeMap<String, String>,
    pub spipe: SpipeSection,
    pub vqa: VqaSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: String,
    pub seed: Option<u64>,
    pub url: Option<String>,
    pub embed_text: Option<String>,
    pub embed_image: Option<String>,
    pub caption: Option<String>,
    pub detect: Option<String>,
    pub complete: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub dim: usize,
    /// Name of the environment variable holding a bearer token.
    pub bearer_token_env: Option<String>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: "remote".into(),
            seed: None,
            url: None,
            embed_text: None,
            embed_image: None,
            caption: None,
            detect: None,
            complete: None,
            timeout_ms: 30_000,
            max_in_flight: 8,
            dim: DEFAULT_EMBEDDING_DIM,
            bearer_token_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub tags: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub top_tags: usize,
    pub beta: f64,
    pub gamma: f64,
    pub candidates: usize,
    pub iou_threshold: f64,
    pub nms_keep: usize,
    pub min_area_fraction: f64,
    pub large_fraction: f64,
    pub moderate_fraction: f64,
    pub region_captions: bool,
}

impl Default for ParamsSection {
    fn default() -> Self {
        let sizes = SizeThresholds::default();
        ParamsSection {
            top_tags: DEFAULT_TOP_TAGS,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            candidates: DEFAULT_CANDIDATES,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            nms_keep: DEFAULT_NMS_KEEP,
            min_area_fraction: DEFAULT_MIN_AREA_FRACTION,
            large_fraction: sizes.large,
            moderate_fraction: sizes.moderate,
            region_captions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub ending: String,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            ending: "describe".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-item scores.
    #[default]
    Macro,
    /// Scores from matched and total counts pooled over the corpus.
    Micro,
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            other => Err(Error::Config(format!(
                "unknown averaging `{other}` (expected macro or micro)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpipeSection {
    pub lexicon: Option<PathBuf>,
    pub averaging: Averaging,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqaSection {
    /// Directory holding the images named in the dataset.
    pub images: Option<PathBuf>,
    /// Answer index, one answer per line. Needed for discriminative runs.
    pub answers: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub parallelism: usize,
    pub output: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            parallelism: 4,
            output: None,
        }
    }
}

impl RunConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let config = Self::read(path)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and resolves a config file without validating it, so that
    /// command-line overrides can be applied first.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses without validating; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.vocab.tags);
        fix(&mut self.vocab.attributes);
        fix(&mut self.vocab.cache_dir);
        fix(&mut self.spipe.lexicon);
        fix(&mut self.vqa.images);
        fix(&mut self.vqa.answers);
        fix(&mut self.run.output);
    }

    /// Switches to the mock backend with `seed`.
    pub fn with_mock_seed(mut self, seed: u64) -> Self {
        self.backend.kind = "mock".into();
        self.backend.seed = Some(seed);
        self
    }

    pub fn is_mock(&self) -> bool {
        self.backend.kind == "mock"
    }

    pub fn validate(&self) -> Result<()> {
        self.backend_config()?.validate()?;
        self.clue_params()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let p = &self.params;
        if !(-1.0..=1.0).contains(&p.gamma) {
            return Err(Error::Config("gamma must lie in [-1, 1]".into()));
        }
        if p.candidates == 0 || (p.candidates != 1 && !p.candidates.is_multiple_of(2)) {
            return Err(Error::Config(format!(
                "candidates K={} must be even (or 1)",
                p.candidates
            )));
        }
        if !(0.0 < p.moderate_fraction
            && p.moderate_fraction <= p.large_fraction
            && p.large_fraction <= 1.0)
        {
            return Err(Error::Config(
                "size fractions must satisfy 0 < moderate <= large <= 1".into(),
            ));
        }
        if self.run.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        self.ending()?;
        for path in [
            &self.vocab.tags,
            &self.vocab.attributes,
            &self.spipe.lexicon,
            &self.vqa.answers,
        ]
        .into_iter()
        .flatten()
        {
            if !path.is_file() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        if let Some(dir) = &self.vqa.images {
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "{} is not a directory",
                    dir.display()
                )));
            }
        }
        Ok(())
    }

    pub fn backend_config(&self) -> Result<BackendConfig> {
        let b = &self.backend;
        let kind = match b.kind.as_str() {
            "remote" => BackendKind::Remote,
            "mock" => BackendKind::Mock {
                seed: b
                    .seed
                    .ok_or_else(|| Error::Config("mock backend needs a seed".into()))?,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown backend kind `{other}` (expected remote or mock)"
                )))
            }
        };
        let base = b.url.clone().unwrap_or_default();
        let pick = |o: &Option<String>| o.clone().unwrap_or_else(|| base.clone());
        let endpoints = Endpoints {
            embed_text: pick(&b.embed_text),
            embed_image: pick(&b.embed_image),
            caption: pick(&b.caption),
            detect: pick(&b.detect),
            complete: pick(&b.complete),
        };
        let bearer_token = match &b.bearer_token_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| Error::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        Ok(BackendConfig {
            kind,
            endpoints,
            timeout_ms: b.timeout_ms,
            max_in_flight: b.max_in_flight,
            dim: b.dim,
            bearer_token,
        })
    }

    /// Short stable identifier of the text encoder, used to name vocabulary
    /// caches so that different backends never share one.
    pub fn encoder_key(&self) -> String {
        match (self.backend.kind.as_str(), self.backend.seed) {
            ("mock", Some(seed)) => format!("mock{seed}-d{}", self.backend.dim),
            _ => {
                let url = self
                    .backend
                    .embed_text
                    .as_deref()
                    .or(self.backend.url.as_deref())
                    .unwrap_or("");
                let digest =
                    Sha256::digest(format!("{url}{}", Capability::EmbedText.path()).as_bytes());
                let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
                format!("remote{hex}-d{}", self.backend.dim)
            }
        }
    }

    /// Cache file for the vocabulary at `vocab_path`, when caching is on.
    pub fn cache_path(&self, vocab_path: &Path) -> Option<PathBuf> {
        let dir = self.vocab.cache_dir.as_ref()?;
        let stem = vocab_path.file_stem()?.to_string_lossy();
        Some(dir.join(format!("{stem}.{}.tsv", self.encoder_key())))
    }

    pub fn clue_params(&self) -> ClueParams {
        let p = &self.params;
        ClueParams {
            top_tags: p.top_tags,
            beta: p.beta,
            iou_threshold: p.iou_threshold,
            nms_keep: p.nms_keep,
            min_area_fraction: p.min_area_fraction,
            region_captions: p.region_captions,
        }
    }

    pub fn prompt_style(&self) -> PromptStyle {
        PromptStyle {
            sizes: SizeThresholds {
                large: self.params.large_fraction,
                moderate: self.params.moderate_fraction,
            },
            endings: EndingTable::with_overrides(self.endings.clone()),
        }
    }

    pub fn ending(&self) -> Result<TaskEnding> {
        TaskEnding::from_name(&self.task.ending, &self.prompt_style().endings)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn required<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("config does not set {what}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = RunConfig::parse("", Path::new("/x")).unwrap();
        assert_eq!(c.params, ParamsSection::default());
        assert_eq!(c.sampling, SamplingParams::default());
        assert_eq!(c.ending().unwrap(), TaskEnding::Describe);
        assert_eq!(c.run.parallelism, 4);
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let c =
            RunConfig::parse("[vocab]\ntags = \"v/tags.txt\"\n", Path::new("/etc/best")).unwrap();
        assert_eq!(c.vocab.tags.unwrap(), Path::new("/etc/best/v/tags.txt"));
    }

    #[test]
    fn rejects_bad_values() {
        let base = Path::new("/");
        assert!(RunConfig::parse("[params]\nbogus = 1\n", base).is_err());
        let c = RunConfig::parse("[params]\ncandidates = 3\n", base)
            .unwrap()
            .with_mock_seed(1);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = RunConfig::parse("[backend]\nkind = \"mock\"\n", base).unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse("[vocab]\ntags = \"missing.txt\"\n", base)
            .unwrap()
            .with_mock_seed(1);
        assert!(c.validate().is_err());
        let c = RunConfig::parse("[task]\nending = \"limerick\"\n", base)
            .unwrap()
            .with_mock_seed(1);
        assert!(c.validate().is_err());
    }

    #[test]
    fn remote_needs_endpoints() {
        let base = Path::new("/");
        let c = RunConfig::parse("", base).unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse(
            "[backend]\nurl = \"http://a\"\ncomplete = \"http://b\"\n",
            base,
        )
        .unwrap();
        let b = c.backend_config().unwrap();
        assert_eq!(
            b.endpoints.url(Capability::Complete),
            "http://b/v1/complete"
        );
        assert_eq!(b.endpoints.url(Capability::Detect), "http://a/v1/detect");
        assert!(c.validate().is_ok());
    }

    #[test]
    fn custom_endings_and_cache_keys() {
        let c = RunConfig::parse(
            "[task]\nending = \"poem\"\n[endings]\npoem = \"Write a poem:\"\n[vocab]\ncache_dir = \"c\"\n",
            Path::new("/r"),
        )
        .unwrap()
        .with_mock_seed(7);
        assert_eq!(
            c.ending().unwrap(),
            TaskEnding::Custom("Write a poem:".into())
        );
        assert_eq!(
            c.cache_path(Path::new("/r/tags.txt")).unwrap(),
            Path::new("/r/c/tags.mock7-d512.tsv")
        );
    }
}
