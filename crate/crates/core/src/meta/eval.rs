use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pipeline::{answer_question, run_planner, Pipeline};
use super::record::{kind_label, QuestionRecord};
use super::AgentBundle;
use crate::embed::{cosine_unchecked, embed_text, EmbedderConfig};
use crate::env::{Question, TaskCorpus};
use crate::error::{Error, Result};
use crate::graph::{TaskId, DEFAULT_CORRECT_THRESHOLD};
use crate::rl_agent::Mode;
use crate::Embedding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub mean_delta: f64,
    pub questions: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_task: BTreeMap<TaskId, TaskReport>,
    /// Mean of the per-task means.
    pub macro_delta: f64,
    #[serde(skip)]
    pub records: Vec<QuestionRecord>,
}

impl EvalReport {
    /// Aggregates per-question records.
    pub fn from_records(records: Vec<QuestionRecord>) -> Self {
        let mut sums: BTreeMap<TaskId, (f64, usize, usize)> = BTreeMap::new();
        for r in &records {
            let e = sums.entry(r.task_id.clone()).or_default();
            e.0 += r.delta;
            e.1 += 1;
            e.2 += usize::from(r.backend_failed);
        }
        let per_task: BTreeMap<TaskId, TaskReport> = sums
            .into_iter()
            .map(|(t, (s, n, f))| (t, TaskReport { mean_delta: s / n as f64, questions: n, failures: f }))
            .collect();
        let macro_delta = if per_task.is_empty() {
            0.0
        } else {
            per_task.values().map(|t| t.mean_delta).sum::<f64>() / per_task.len() as f64
        };
        Self { per_task, macro_delta, records }
    }

    /// Mean Δ over the records of one question kind (`None` when absent).
    pub fn mean_for_kind(&self, kind: &str) -> Option<f64> {
        let ds: Vec<f64> = self.records.iter().filter(|r| r.kind.as_deref() == Some(kind)).map(|r| r.delta).collect();
        (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64)
    }

    /// Mean Δ over every record.
    pub fn mean_delta(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.records.iter().map(|r| r.delta).sum::<f64>() / self.records.len() as f64
        }
    }

    pub fn questions(&self) -> usize {
        self.records.len()
    }
}


fn record_for(q: &Question, path: Vec<String>, answer: String, delta: f64, candidates: usize, episode_len: usize, failed: bool) -> QuestionRecord {
    QuestionRecord {
        iteration: None,
        task_id: q.task_id.clone(),
        question_id: q.question_id.clone(),
        kind: kind_label(q),
        selected_path: path,
        answer,
        truth: q.answer.clone(),
        delta,
        candidates,
        episode_len,
        backend_failed: failed,
    }
}

/// Answers every question with one bundle using the greedy policy.
pub fn evaluate_bundle(pipeline: &Pipeline<'_>, bundle: &AgentBundle, questions: &TaskCorpus, seed: u64) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(questions.len());
    for q in questions.questions() {
        let a = answer_question(pipeline, &bundle.rl, &bundle.ml, &bundle.rl_config, q, Mode::Greedy, &mut rng)?;
        let episode_len = a.episode().steps.len();
        records.push(record_for(q, a.path, a.answer, a.delta, a.traversal.candidates.len(), episode_len, a.backend_failed));
    }
    Ok(EvalReport::from_records(records))
}

/// Evaluates each task of `query` with its own adapted bundle and reports
/// per-task means and their macro average.
pub fn meta_test(
    pipeline: &Pipeline<'_>,
    adapted: &BTreeMap<TaskId, AgentBundle>,
    query: &TaskCorpus,
    seed: u64,
) -> Result<EvalReport> {
    let mut records = Vec::with_capacity(query.len());
    for task in query.task_ids() {
        let bundle = adapted
            .get(task)
            .ok_or_else(|| Error::Precondition(format!("no adapted bundle for task {task}")))?;
        let subset = query.only_tasks(std::slice::from_ref(task));
        records.extend(evaluate_bundle(pipeline, bundle, &subset, seed)?.records);
    }
    Ok(EvalReport::from_records(records))
}

/// Retrieval ablation that can only reuse stored paths whole: each query
/// question is answered with the stored path of the most similar support
/// question (embedding cosine, ties to the earliest).
pub fn verbatim_baseline(
    pipeline: &Pipeline<'_>,
    support: &TaskCorpus,
    query: &TaskCorpus,
    embedder: &EmbedderConfig,
) -> Result<EvalReport> {
    let stored: Vec<(Embedding, Vec<String>)> = support
        .questions()
        .filter_map(|q| q.gold_path(DEFAULT_CORRECT_THRESHOLD).map(|p| (embed_text(&q.text, embedder), p.instructions)))
        .collect();
    let mut records = Vec::with_capacity(query.len());
    for q in query.questions() {
        let e: Embedding = embed_text(&q.text, embedder);
        let mut best: Option<(f32, &Vec<String>)> = None;
        for (s, path) in &stored {
            let c = cosine_unchecked(&e, s);
            if best.is_none_or(|(b, _)| c > b) {
                best = Some((c, path));
            }
        }
        let path = best.map(|(_, p)| p.clone()).unwrap_or_default();
        let (answer, delta, failed) = run_planner(pipeline, q, &path);
        records.push(record_for(q, path, answer, delta, usize::from(best.is_some()), 0, failed));
    }
    Ok(EvalReport::from_records(records))
}
