//! Image paragraph generation from structured visual clues, with a
//! scene-graph F-score metric and a visual question answering harness.
//!
//! All model inference goes through [`gateway::Gateway`], which talks to
//! remote model servers over a small JSON protocol or to deterministic
//! mock backends.

pub mod api;
pub mod clues;
pub mod corpus;
pub mod error;
pub mod gateway;
pub mod judge;
pub mod prompt;
pub mod sgraph;
pub mod vqa;

pub use error::{Error, Result};
