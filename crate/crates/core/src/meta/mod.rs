//! Meta-learning around the two agents: training over task batches with
//! inner adaptation and outer updates, few-shot adaptation to new task
//! families, and evaluation.

mod adapt;
mod eval;
mod pipeline;
mod pretrain;
mod record;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adapt::{adapt_tasks, fewshot_adapt, Adaptation};
pub use eval::{evaluate_bundle, meta_test, verbatim_baseline, EvalReport, TaskReport};
pub use pipeline::{answer_question, Attempt, Pipeline};
pub use pretrain::{pretrain, PretrainLog};
pub use record::{read_records, write_records, Manifest, QuestionRecord};
pub use train::{meta_train, TrainLog};

use crate::embed::EmbedderConfig;
use crate::error::{Error, Result};
use crate::ml_agent::EncoderParams;
use crate::rl_agent::{PolicyParams, RlConfig};
use crate::{Encoder, Policy};

pub const BUNDLE_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    /// Inner (per-task) step size α.
    pub inner_lr: f64,
    /// Outer step size β.
    pub outer_lr: f64,
    pub inner_steps: usize,
    /// Questions per task used by each inner or outer batch.
    pub questions_per_inner_batch: usize,
    pub tasks_per_meta_batch: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Treat adapted parameters as constants in the outer gradient. Only the
    /// first-order form is implemented.
    pub first_order: bool,
    /// Labelled states drawn per support question for the warm start.
    pub warmstart_samples_per_question: usize,
    /// Paths of other questions added to every fine-tuning pool.
    pub pool_negatives: usize,
    /// Optimizer steps of the optional pre-training stage run before
    /// meta-training (0 skips it).
    pub pretrain_steps: usize,
    pub pretrain_lr: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_lr: 0.01,
            outer_lr: 0.001,
            inner_steps: 1,
            questions_per_inner_batch: 8,
            tasks_per_meta_batch: 4,
            iterations: 50,
            seed: 0,
            first_order: true,
            warmstart_samples_per_question: 6,
            pool_negatives: 2,
            pretrain_steps: 0,
            pretrain_lr: 0.01,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.first_order {
            return Err(Error::Config("only first-order meta-gradients are supported (first_order = true)".into()));
        }
        for (name, v) in [("inner_lr", self.inner_lr), ("outer_lr", self.outer_lr), ("pretrain_lr", self.pretrain_lr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if self.questions_per_inner_batch == 0 || self.tasks_per_meta_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Everything needed to answer questions with a trained system except the
/// graph, which is stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBundle {
    pub rl: Policy,
    pub ml: Encoder,
    pub rl_config: RlConfig,
    pub meta_config: MetaConfig,
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    format_version: String,
    rl_config: RlConfig,
    meta_config: MetaConfig,
}

impl AgentBundle {
    /// Fresh agents: a seeded policy and an identity encoder.
    pub fn init(embedder: EmbedderConfig, rl_config: RlConfig, meta_config: MetaConfig) -> Self {
        Self {
            rl: PolicyParams::init(meta_config.seed),
            ml: EncoderParams::identity(embedder),
            rl_config,
            meta_config,
        }
    }

    /// Writes `bundle.json`, `policy.json` and `encoder.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let header = BundleHeader {
            format_version: BUNDLE_FORMAT_VERSION.into(),
            rl_config: self.rl_config.clone(),
            meta_config: self.meta_config.clone(),
        };
        fs::write(dir.join("bundle.json"), serde_json::to_string_pretty(&header)?)?;
        self.rl.save(&dir.join("policy.json"))?;
        self.ml.save(&dir.join("encoder.json"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("bundle.json");
        let raw = fs::read_to_string(&path)
            .map_err(|e| Error::NotFound(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))?;
        crate::check_format_version(&value, BUNDLE_FORMAT_VERSION, &path)?;
        let header: BundleHeader =
            serde_json::from_value(value).map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))?;
        Ok(Self {
            rl: PolicyParams::load(&dir.join("policy.json"))?,
            ml: EncoderParams::load(&dir.join("encoder.json"))?,
            rl_config: header.rl_config,
            meta_config: header.meta_config,
        })
    }
}
