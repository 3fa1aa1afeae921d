use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pipeline::{answer_question, Pipeline};
use super::record::{kind_label, QuestionRecord};
use super::{AgentBundle, MetaConfig};
use crate::env::{Question, TaskCorpus};
use crate::error::Result;
use crate::graph::{InstructionGraph, TaskId, DEFAULT_CORRECT_THRESHOLD};
use crate::ml_agent::{evaluate_pool, ft_loss, pt_loss, EncoderParams, FtItem, PathPool, QuestionPath};
use crate::optim::{sgd_step, Adam, AdamConfig};
use crate::rl_agent::{make_warmstart_dataset, reinforce_loss_grad, Baseline, Mode, PolicyParams, RlConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub tasks: Vec<TaskId>,
    pub mean_delta: f64,
    pub warmstart_loss: f64,
    pub pretrain_loss: f64,
    pub finetune_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<QuestionRecord>,
    pub iterations: Vec<IterationSummary>,
}

pub(crate) fn sample_questions<'q, R: Rng + ?Sized>(questions: &'q [Question], n: usize, rng: &mut R) -> Vec<&'q Question> {
    questions.choose_multiple(rng, n.min(questions.len())).collect()
}

pub(crate) fn gold_pairs(questions: &[&Question]) -> Vec<QuestionPath> {
    questions
        .iter()
        .filter_map(|q| q.gold_path(DEFAULT_CORRECT_THRESHOLD).map(|p| QuestionPath::new(q.text.clone(), p.instructions)))
        .collect()
}

/// Inner adaptation on a task's support batch: `inner_steps` gradient steps
/// of the warm-start loss on the policy and of the pre-training loss on the
/// encoder, both at `inner_lr`. Returns the adapted copies and the two
/// final losses.
pub(crate) fn inner_adapt<R: Rng + ?Sized>(
    graph: &InstructionGraph,
    rl: &PolicyParams<f64>,
    ml: &EncoderParams<f64>,
    batch: &[&Question],
    config: &MetaConfig,
    rng: &mut R,
) -> Result<(PolicyParams<f64>, EncoderParams<f64>, f64, f64)> {
    let corpus = TaskCorpus::from_questions(batch.iter().map(|q| (*q).clone()));
    let samples = make_warmstart_dataset(graph, &corpus, config.warmstart_samples_per_question, rng.random())?;
    let states: Vec<_> = samples.iter().map(|s| (s.state, s.label)).collect();
    let pairs = gold_pairs(batch);

    let mut rl = rl.clone();
    let mut ml = ml.clone();
    let (mut ws, mut pt) = (0.0, 0.0);
    for _ in 0..config.inner_steps {
        let (loss, grad) = rl.bce_loss_grad(&states);
        sgd_step(&mut rl.data, &grad, config.inner_lr);
        ws = loss;
        if !pairs.is_empty() {
            let p = pt_loss(&ml, &pairs)?;
            sgd_step(&mut ml.data, &p.grad, config.inner_lr);
            pt = p.total();
        }
    }
    Ok((rl, ml, ws, pt))
}

/// Builds the fine-tuning pool: the distinct candidates plus up to
/// `negatives` stored paths of other questions.
pub(crate) fn build_pool<R: Rng + ?Sized>(
    candidates: Vec<Vec<String>>,
    negatives_from: &[(String, Vec<String>)],
    question: &Question,
    negatives: usize,
    rng: &mut R,
) -> PathPool {
    let mut paths: Vec<Vec<String>> = Vec::new();
    for c in candidates {
        if !paths.contains(&c) {
            paths.push(c);
        }
    }
    let others: Vec<&(String, Vec<String>)> =
        negatives_from.iter().filter(|(id, p)| id != question.question_id.as_str() && !paths.contains(p)).collect();
    for (_, p) in others.choose_multiple(rng, negatives.min(others.len())) {
        if !paths.contains(p) {
            paths.push(p.clone());
        }
    }
    PathPool::new(paths)
}

/// Outer-loop signal for one task's query batch: REINFORCE gradient for the
/// policy, pool fine-tuning gradient for the encoder, and the log records.
pub(crate) struct OuterSignal {
    pub rl_grad: Vec<f64>,
    pub ml_grad: Vec<f64>,
    pub ft_loss: f64,
    pub records: Vec<QuestionRecord>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn outer_signal<R: Rng + ?Sized>(
    pipeline: &Pipeline<'_>,
    rl: &PolicyParams<f64>,
    ml: &EncoderParams<f64>,
    rl_config: &RlConfig,
    questions: &[&Question],
    negatives_from: &[(String, Vec<String>)],
    pool_negatives: usize,
    baseline: &mut Baseline,
    iteration: Option<usize>,
    rng: &mut R,
) -> Result<OuterSignal> {
    let mut rl_grad = vec![0.0; rl.data.len()];
    let mut items = Vec::with_capacity(questions.len());
    let mut records = Vec::with_capacity(questions.len());
    for question in questions {
        let attempt = answer_question(pipeline, rl, ml, rl_config, question, Mode::Sample, rng)?;
        let episode = attempt.episode();
        if !episode.steps.is_empty() {
            let b = if rl_config.use_baseline { baseline.value() } else { 0.0 };
            let (_, g) = reinforce_loss_grad(rl, &episode, rl_config.discount, b);
            for (a, x) in rl_grad.iter_mut().zip(&g) {
                *a += x;
            }
        }
        baseline.record(attempt.delta);

        let pool = build_pool(attempt.candidate_paths(), negatives_from, question, pool_negatives, rng);
        if !pool.is_empty() {
            let pool = evaluate_pool(question, pool, pipeline.planner, pipeline.metric)?;
            items.push(FtItem { question: question.text.clone(), pool });
        }
        records.push(QuestionRecord {
            iteration,
            task_id: question.task_id.clone(),
            question_id: question.question_id.clone(),
            kind: kind_label(question),
            selected_path: attempt.path.clone(),
            answer: attempt.answer.clone(),
            truth: question.answer.clone(),
            delta: attempt.delta,
            candidates: attempt.traversal.candidates.len(),
            episode_len: episode.steps.len(),
            backend_failed: attempt.backend_failed,
        });
    }
    let (ml_grad, ft) = if items.is_empty() {
        (vec![0.0; ml.data.len()], 0.0)
    } else {
        let lg = ft_loss(ml, &items)?;
        (lg.grad, lg.loss)
    };
    Ok(OuterSignal { rl_grad, ml_grad, ft_loss: ft, records })
}

pub(crate) fn stored_paths(corpus: &TaskCorpus) -> Vec<(String, Vec<String>)> {
    corpus
        .questions()
        .filter_map(|q| q.gold_path(DEFAULT_CORRECT_THRESHOLD).map(|p| (q.question_id.to_string(), p.instructions)))
        .collect()
}

/// Meta-training. Each iteration samples a batch of tasks; for each task the
/// agents are adapted on a support batch (warm start / pre-training), the
/// adapted agents answer a query batch through the full pipeline, and the
/// resulting policy-gradient and fine-tuning gradients — taken at the
/// adapted parameters (first-order) — are summed over tasks for one outer
/// Adam step at `outer_lr`. The graph is never modified.
pub fn meta_train(
    pipeline: &Pipeline<'_>,
    support: &TaskCorpus,
    query: &TaskCorpus,
    init: &AgentBundle,
    config: &MetaConfig,
) -> Result<(AgentBundle, TrainLog)> {
    config.validate()?;
    init.rl_config.validate()?;
    let mut bundle = init.clone();
    bundle.meta_config = config.clone();
    let mut log = TrainLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rl_opt = Adam::new(AdamConfig::with_lr(config.outer_lr), bundle.rl.data.len());
    let mut ml_opt = Adam::new(AdamConfig::with_lr(config.outer_lr), bundle.ml.data.len());
    let mut baseline = Baseline::new(bundle.rl_config.baseline_window);
    let negatives_from = stored_paths(support);
    let tasks: Vec<TaskId> = support.task_ids().filter(|t| !support.task(t).is_empty()).cloned().collect();

    for iteration in 0..config.iterations {
        let batch: Vec<TaskId> =
            tasks.choose_multiple(&mut rng, config.tasks_per_meta_batch.min(tasks.len())).cloned().collect();
        let mut rl_grad = vec![0.0; bundle.rl.data.len()];
        let mut ml_grad = vec![0.0; bundle.ml.data.len()];
        let (mut ws_sum, mut pt_sum, mut ft_sum, mut delta_sum, mut n_q) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for task in &batch {
            let task_query = query.task(task);
            if task_query.is_empty() {
                log::warn!("task {task} has no query questions; skipped");
                continue;
            }
            let inner = sample_questions(support.task(task), config.questions_per_inner_batch, &mut rng);
            let (rl_i, ml_i, ws, pt) = inner_adapt(pipeline.graph, &bundle.rl, &bundle.ml, &inner, config, &mut rng)?;
            let outer = sample_questions(task_query, config.questions_per_inner_batch, &mut rng);
            let signal = outer_signal(
                pipeline,
                &rl_i,
                &ml_i,
                &bundle.rl_config,
                &outer,
                &negatives_from,
                config.pool_negatives,
                &mut baseline,
                Some(iteration),
                &mut rng,
            )?;
            for (a, x) in rl_grad.iter_mut().zip(&signal.rl_grad) {
                *a += x;
            }
            for (a, x) in ml_grad.iter_mut().zip(&signal.ml_grad) {
                *a += x;
            }
            ws_sum += ws;
            pt_sum += pt;
            ft_sum += signal.ft_loss;
            delta_sum += signal.records.iter().map(|r| r.delta).sum::<f64>();
            n_q += signal.records.len();
            log.records.extend(signal.records);
        }
        rl_opt.step(&mut bundle.rl.data, &rl_grad)?;
        ml_opt.step(&mut bundle.ml.data, &ml_grad)?;
        let t = batch.len().max(1) as f64;
        log.iterations.push(IterationSummary {
            iteration,
            tasks: batch,
            mean_delta: if n_q == 0 { 0.0 } else { delta_sum / n_q as f64 },
            warmstart_loss: ws_sum / t,
            pretrain_loss: pt_sum / t,
            finetune_loss: ft_sum / t,
        });
    }
    Ok((bundle, log))
}
