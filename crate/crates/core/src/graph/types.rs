use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Embedding;

/// Separator used whenever a path is rendered as one line of text.
pub const PATH_SEPARATOR: &str = " -> ";

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(TaskId);
string_id!(QuestionId);

pub type NodeId = u32;

/// Where a stored instruction came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub task_id: TaskId,
    pub question_id: QuestionId,
    pub position: usize,
}

/// A stored instruction: text, its embedding and every occurrence that was
/// merged into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub text: String,
    pub embedding: Embedding,
    pub sources: Vec<Provenance>,
}

/// An ordered instruction sequence that solved (or is proposed to solve) one
/// question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionPath {
    pub instructions: Vec<String>,
    pub task_id: TaskId,
    pub question_id: QuestionId,
    pub success_metric: f64,
}

impl InstructionPath {
    pub fn new(
        instructions: Vec<String>,
        task_id: impl Into<TaskId>,
        question_id: impl Into<QuestionId>,
        success_metric: f64,
    ) -> Self {
        Self { instructions, task_id: task_id.into(), question_id: question_id.into(), success_metric }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Instruction texts joined by [`PATH_SEPARATOR`].
    pub fn render(&self) -> String {
        render_instructions(&self.instructions)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instructions.is_empty() {
            return Err(Error::Data(format!("question {}: empty instruction path", self.question_id)));
        }
        for text in &self.instructions {
            validate_instruction_text(text)
                .map_err(|e| Error::Data(format!("question {}: {e}", self.question_id)))?;
        }
        if !(0.0..=1.0).contains(&self.success_metric) {
            return Err(Error::Data(format!(
                "question {}: success_metric {} outside [0, 1]",
                self.question_id, self.success_metric
            )));
        }
        Ok(())
    }
}

pub fn render_instructions<S: AsRef<str>>(instructions: &[S]) -> String {
    instructions.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(PATH_SEPARATOR)
}

/// Instruction texts must be non-empty single lines that do not contain the
/// path separator, so a rendered path can always be split back apart.
pub fn validate_instruction_text(text: &str) -> std::result::Result<(), String> {
    if text.trim().is_empty() {
        return Err("empty instruction".into());
    }
    if text.contains('\n') || text.contains('\r') {
        return Err(format!("instruction {text:?} spans several lines"));
    }
    if text.contains(PATH_SEPARATOR) {
        return Err(format!("instruction {text:?} contains the path separator"));
    }
    Ok(())
}
