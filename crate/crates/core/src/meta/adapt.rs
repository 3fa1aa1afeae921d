use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::pipeline::Pipeline;
use super::train::{inner_adapt, outer_signal, sample_questions, stored_paths};
use super::{AgentBundle, MetaConfig};
use crate::backend::Planner;
use crate::env::{MetricKind, TaskCorpus};
use crate::error::Result;
use crate::graph::{extend_graph, InstructionGraph, TaskId};
use crate::optim::sgd_step;
use crate::rl_agent::Baseline;

#[derive(Debug, Clone)]
pub struct Adaptation {
    pub bundles: BTreeMap<TaskId, AgentBundle>,
    /// Tasks returned unadapted because they had no support questions.
    pub flagged: Vec<TaskId>,
    /// The base graph extended with the new support paths.
    pub graph: InstructionGraph,
}

/// Few-shot adaptation to new task families. The new support set is first
/// inserted into a copy of the graph, then every task is adapted on the
/// extended graph as in [`adapt_tasks`]. The base bundle and graph are
/// untouched.
pub fn fewshot_adapt(
    base: &AgentBundle,
    graph: &InstructionGraph,
    planner: &dyn Planner,
    metric: MetricKind,
    new_support: &TaskCorpus,
    config: &MetaConfig,
) -> Result<Adaptation> {
    config.validate()?;
    let extended = extend_graph(graph, new_support)?;
    let pipeline = Pipeline { graph: &extended, planner, metric };
    let (bundles, flagged) = adapt_tasks(&pipeline, base, new_support, config)?;
    Ok(Adaptation { bundles, flagged, graph: extended })
}

/// Per-task adaptation on a graph that already holds `support`. Starting
/// from the base bundle each time, the policy takes warm-start steps and the
/// encoder pre-training steps at `inner_lr`, followed by one policy-gradient
/// and one pool fine-tuning step at `outer_lr` from answering the same
/// support batch. Tasks without support questions keep the base bundle and
/// are returned in the flagged list.
pub fn adapt_tasks(
    pipeline: &Pipeline<'_>,
    base: &AgentBundle,
    support: &TaskCorpus,
    config: &MetaConfig,
) -> Result<(BTreeMap<TaskId, AgentBundle>, Vec<TaskId>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let negatives_from = stored_paths(support);
    let mut bundles = BTreeMap::new();
    let mut flagged = Vec::new();
    for task in support.task_ids() {
        let questions = support.task(task);
        if questions.is_empty() {
            flagged.push(task.clone());
            bundles.insert(task.clone(), base.clone());
            continue;
        }
        let batch = sample_questions(questions, config.questions_per_inner_batch, &mut rng);
        let (mut rl, mut ml, _, _) = inner_adapt(pipeline.graph, &base.rl, &base.ml, &batch, config, &mut rng)?;
        let mut baseline = Baseline::new(base.rl_config.baseline_window);
        let signal = outer_signal(
            pipeline,
            &rl,
            &ml,
            &base.rl_config,
            &batch,
            &negatives_from,
            config.pool_negatives,
            &mut baseline,
            None,
            &mut rng,
        )?;
        sgd_step(&mut rl.data, &signal.rl_grad, config.outer_lr);
        sgd_step(&mut ml.data, &signal.ml_grad, config.outer_lr);
        bundles.insert(
            task.clone(),
            AgentBundle { rl, ml, rl_config: base.rl_config.clone(), meta_config: config.clone() },
        );
    }
    Ok((bundles, flagged))
}
