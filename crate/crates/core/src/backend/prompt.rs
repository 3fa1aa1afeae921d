//! Four-part planning prompts: task description, instruction definitions,
//! the planning path and demonstrations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::render_instructions;

/// The line introducing the planning path in every template. The path
/// follows on the next line, terminated by a single `.`.
pub const PATH_MARKER: &str = "Here is the provided action sequence:";

const HOTPOTQA_DESCRIPTION: &str = "Solve a question answering task with interleaving Thought, Action, Observation steps. Thought can reason about the current situation, and Action can be three types:";
const HOTPOTQA_DEFINITIONS: &str = "(1) Search[entity], which searches the exact entity on Wikipedia and returns the first paragraph if it exists. If not, it will return some similar entities to search.
(2) Lookup[keyword], which returns the next sentence containing keyword in the current passage.
(3) Finish[answer], which returns the answer and finishes the task.";
const HOTPOTQA_GUIDANCE: &str = "Assess the initial understanding of the task and adjust the approach if new insights or requirements arise during the process.
If an action does not yield useful information or leads to a dead end, reconsider the previous steps or switch between \"Search\" and \"Lookup\" to gather more relevant data.";

const ALFWORLD_DESCRIPTION: &str = "Interact with a household to solve a task.";
const ALFWORLD_DEFINITIONS: &str = "The following are legal actions: go, take, clean, use, examine, look, heat, cool, open, close, toggle, put, think.
When generating an action, the first word of your response must be one of the legal actions listed above.";

const WEBSHOP_DESCRIPTION: &str =
    "You are an advanced reasoning agent tasked with interacting with a shopping website. The following are legal actions:";
const WEBSHOP_DEFINITIONS: &str = "(1) search[keyword]: You can perform a search using specific keywords (if \"has_search_bar\" is True). Keep the keyword short and concise. Avoid overly detailed descriptions. Only include keywords that help identify the product.
(2) click[clickables]: You can click on available clickable items.";

const ADJUST_GUIDANCE: &str =
    "Assess the initial understanding of the task and adjust the approach if new insights or requirements arise during the process.";

const SYNTHETIC_DESCRIPTION: &str = "Answer a question about the entities of a small knowledge base with interleaving Thought, Action, Observation steps. Action can be four types:";
const SYNTHETIC_DEFINITIONS: &str = "(1) Search[entity], which opens the record of the exact entity.
(2) Lookup[attribute], which reads the attribute from the current record.
(3) Compare, which answers yes if every looked-up value is the same and no otherwise.
(4) Finish[answer], which returns the answer and finishes the task; a bare Finish returns the last result.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Hotpotqa,
    Alfworld,
    Webshop,
    #[default]
    Synthetic,
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateId::Hotpotqa => "hotpotqa",
            TemplateId::Alfworld => "alfworld",
            TemplateId::Webshop => "webshop",
            TemplateId::Synthetic => "synthetic",
        })
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hotpotqa" => Ok(TemplateId::Hotpotqa),
            "alfworld" => Ok(TemplateId::Alfworld),
            "webshop" => Ok(TemplateId::Webshop),
            "synthetic" => Ok(TemplateId::Synthetic),
            other => Err(Error::Config(format!("unknown prompt template {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptParts {
    pub task_description: String,
    pub instruction_definitions: String,
    pub planning_path: String,
    pub demonstrations: String,
}

impl PromptParts {
    fn for_template(template: TemplateId, path: &str, demonstrations: &str) -> Self {
        let (description, definitions) = match template {
            TemplateId::Hotpotqa => (HOTPOTQA_DESCRIPTION, HOTPOTQA_DEFINITIONS),
            TemplateId::Alfworld => (ALFWORLD_DESCRIPTION, ALFWORLD_DEFINITIONS),
            TemplateId::Webshop => (WEBSHOP_DESCRIPTION, WEBSHOP_DEFINITIONS),
            TemplateId::Synthetic => (SYNTHETIC_DESCRIPTION, SYNTHETIC_DEFINITIONS),
        };
        Self {
            task_description: description.into(),
            instruction_definitions: definitions.into(),
            planning_path: path.into(),
            demonstrations: demonstrations.into(),
        }
    }
}

/// Renders the prompt for `question` guided by `path` with no
/// demonstrations.
pub fn build_prompt<S: AsRef<str>>(question: &str, path: &[S], template: TemplateId) -> String {
    render_prompt(question, path, template, "")
}

/// Renders the prompt with a demonstrations block (may be empty).
pub fn render_prompt<S: AsRef<str>>(question: &str, path: &[S], template: TemplateId, demonstrations: &str) -> String {
    let parts = PromptParts::for_template(template, &render_instructions(path), demonstrations);
    let guidance = match template {
        TemplateId::Hotpotqa => HOTPOTQA_GUIDANCE,
        _ => ADJUST_GUIDANCE,
    };
    let mut out = String::new();
    out.push_str(&parts.task_description);
    out.push('\n');
    out.push_str(&parts.instruction_definitions);
    out.push_str("\n\nHere are some examples.\n");
    out.push_str(&parts.demonstrations);
    out.push_str("\n\n");
    out.push_str(PATH_MARKER);
    out.push('\n');
    out.push_str(&parts.planning_path);
    out.push_str(".\n");
    out.push_str(guidance);
    out.push_str("\n\nNow you have to complete the following task:\n");
    out.push_str(question);
    out
}

/// Recovers the rendered instruction path from a prompt built by
/// [`render_prompt`]; `None` if the marker is missing.
pub fn extract_path(prompt: &str) -> Option<&str> {
    let start = prompt.find(PATH_MARKER)? + PATH_MARKER.len();
    let rest = prompt[start..].strip_prefix('\n')?;
    let line = rest.split('\n').next()?;
    line.strip_suffix('.')
}
