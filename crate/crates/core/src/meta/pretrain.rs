use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{gold_pairs, sample_questions};
use super::{AgentBundle, MetaConfig};
use crate::env::{Question, TaskCorpus};
use crate::error::Result;
use crate::graph::InstructionGraph;
use crate::ml_agent::pt_loss;
use crate::optim::{Adam, AdamConfig};
use crate::rl_agent::make_warmstart_dataset;

/// Loss curves of the pre-training stage, one entry per step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PretrainLog {
    pub warmstart_loss: Vec<f64>,
    pub pretrain_loss: Vec<f64>,
}

/// Supervised stage before meta-training: the policy is warm-started on
/// membership labels drawn from the whole support set (full batch) and the
/// encoder is pre-trained on question/path pairs (one batch of
/// `questions_per_inner_batch` pairs per step), both with Adam at
/// `pretrain_lr` for `pretrain_steps` steps. With zero steps the bundle is
/// returned unchanged.
pub fn pretrain(
    graph: &InstructionGraph,
    support: &TaskCorpus,
    init: &AgentBundle,
    config: &MetaConfig,
) -> Result<(AgentBundle, PretrainLog)> {
    config.validate()?;
    let mut bundle = init.clone();
    let mut log = PretrainLog::default();
    if config.pretrain_steps == 0 {
        return Ok((bundle, log));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samples = make_warmstart_dataset(graph, support, config.warmstart_samples_per_question, config.seed)?;
    let states: Vec<_> = samples.iter().map(|s| (s.state, s.label)).collect();
    let questions: Vec<Question> = support.questions().cloned().collect();
    let adam = AdamConfig::with_lr(config.pretrain_lr);
    let mut rl_opt = Adam::new(adam, bundle.rl.data.len());
    let mut ml_opt = Adam::new(adam, bundle.ml.data.len());
    for _ in 0..config.pretrain_steps {
        if !states.is_empty() {
            let (loss, grad) = bundle.rl.bce_loss_grad(&states);
            rl_opt.step(&mut bundle.rl.data, &grad)?;
            log.warmstart_loss.push(loss);
        }
        let pairs = gold_pairs(&sample_questions(&questions, config.questions_per_inner_batch, &mut rng));
        if !pairs.is_empty() {
            let p = pt_loss(&bundle.ml, &pairs)?;
            ml_opt.step(&mut bundle.ml.data, &p.grad)?;
            log.pretrain_loss.push(p.total());
        }
    }
    Ok((bundle, log))
}
