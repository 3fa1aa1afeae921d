//! Instruction-graph retrieval for LLM task planning.
//!
//! Successful action sequences are merged into an instruction graph; a
//! policy-guided search proposes candidate paths for a new question, a dual
//! encoder picks the one that goes into the planner prompt, and the two
//! learners are meta-trained so they adapt to new task families from a few
//! examples.

pub mod backend;
pub mod embed;
pub mod env;
pub mod error;
pub mod graph;
pub mod meta;
pub mod ml_agent;
pub mod optim;
pub mod rl_agent;
pub mod scalar;

pub use error::{Error, Result};

/// Stored embeddings are single precision.
pub type Embedding = embed::EmbeddingVector<f32>;
/// Traversal policy in training precision.
pub type Policy = rl_agent::PolicyParams<f64>;
/// Path encoder in training precision.
pub type Encoder = ml_agent::EncoderParams<f64>;

/// Reads `format_version` from a parsed file and rejects anything else than
/// `expected`.
pub(crate) fn check_format_version(value: &serde_json::Value, expected: &str, path: &std::path::Path) -> Result<()> {
    match value.get("format_version").and_then(|v| v.as_str()) {
        Some(found) if found == expected => Ok(()),
        Some(found) => Err(Error::VersionMismatch { found: found.into(), expected: expected.into() }),
        None => Err(Error::MalformedFile(format!("{}: missing format_version", path.display()))),
    }
}
