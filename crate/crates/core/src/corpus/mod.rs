//! Corpus runs: configuration, batch description, scene-graph scoring and
//! VQA evaluation.

pub mod config;
pub mod describe;
pub mod spipe;
pub mod vqa;

pub use config::{Averaging, RunConfig};
pub use describe::{
    describe_corpus, image_set, ocr_sidecar, CorpusSummary, Describer, FailureRecord, OutputLine,
    RunRecord,
};
pub use spipe::{graph_from_conllu, load_candidates, load_references, score_corpus, SpipeReport};
pub use vqa::{VqaLine, VqaReport, VqaRunner};
