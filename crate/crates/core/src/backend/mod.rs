//! Turning a question and its selected instruction path into an answer:
//! prompt construction, a deterministic planner that executes the path
//! against the synthetic world, and a client for chat-completion endpoints.

mod http;
mod mock;
mod parse;
mod prompt;

use serde::{Deserialize, Serialize};

pub use http::{HttpClient, HttpConfig, HttpPlanner, Telemetry};
pub use mock::{mock_execute, MockPlanner, TaoStep};
pub use parse::{parse_actions, ParsedAction};
pub use prompt::{build_prompt, extract_path, render_prompt, PromptParts, TemplateId, PATH_MARKER};

use crate::env::{Question, World};
use crate::error::{Error, Result};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("missing credential: environment variable {0} is not set")]
    MissingCredential(String),

    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),

    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },

    #[error("server error HTTP {status} after {attempts} attempt(s)")]
    Server { status: u16, attempts: u32 },

    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("transport error: {0}")]
    Transport(String),
}

/// What a planner produced for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub answer: String,
    pub trace: Vec<TaoStep>,
    /// Partial credit reported by the environment, if it has any.
    pub reward: Option<f64>,
}

/// Anything that answers a question given a rendered prompt.
pub trait Planner: Send + Sync {
    fn plan(&self, question: &Question, prompt: &str) -> std::result::Result<PlanOutcome, BackendError>;

    /// Template the prompt should be rendered with.
    fn template(&self) -> TemplateId {
        TemplateId::Synthetic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => Err(Error::Config(format!("unknown backend {other:?} (expected mock or http)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Probability that a mock observation is corrupted.
    pub noise: f64,
    pub http: HttpConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { kind: BackendKind::Mock, noise: 0.0, http: HttpConfig::default() }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!("backend noise {} outside [0, 1]", self.noise)));
        }
        if self.kind == BackendKind::Http {
            self.http.validate()?;
        }
        Ok(())
    }

    /// Builds the configured planner. The mock planner needs the world the
    /// questions were generated from.
    pub fn planner(&self, world: Option<&World>, seed: u64) -> Result<Box<dyn Planner>> {
        self.validate()?;
        match self.kind {
            BackendKind::Mock => {
                let world = world.ok_or_else(|| Error::Config("the mock backend needs a world file".into()))?;
                Ok(Box::new(MockPlanner::new(world.clone(), self.noise, seed)))
            }
            BackendKind::Http => Ok(Box::new(HttpPlanner::new(HttpClient::new(self.http.clone())?))),
        }
    }
}
