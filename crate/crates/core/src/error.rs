use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Transport or protocol failure talking to a model backend.
    #[error("backend error at {endpoint}: {cause}")]
    Backend { endpoint: String, cause: String },

    #[error("partial completion: received {received} of {expected} completions")]
    PartialCompletion { received: usize, expected: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    /// A failure annotated with the pipeline stage it happened in.
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn backend(endpoint: impl Into<String>, cause: impl fmt::Display) -> Self {
        Error::Backend {
            endpoint: endpoint.into(),
            cause: cause.to_string(),
        }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Strips stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_invalid_input(&self) -> bool {
        matches!(self.root(), Error::InvalidInput(_))
    }

    pub fn is_backend(&self) -> bool {
        matches!(
            self.root(),
            Error::Backend { .. } | Error::PartialCompletion { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Detect,
    EmbedRegions,
    RegionCaptions,
    GlobalCaption,
    EmbedImage,
    Vocabulary,
    Synthesis,
    Selection,
    Filtering,
    Answer,
    Reformat,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Detect => "detect",
            Stage::EmbedRegions => "embed regions",
            Stage::RegionCaptions => "region captions",
            Stage::GlobalCaption => "global caption",
            Stage::EmbedImage => "embed image",
            Stage::Vocabulary => "vocabulary",
            Stage::Synthesis => "synthesis",
            Stage::Selection => "selection",
            Stage::Filtering => "filtering",
            Stage::Answer => "answer",
            Stage::Reformat => "reformat",
        };
        f.write_str(name)
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
