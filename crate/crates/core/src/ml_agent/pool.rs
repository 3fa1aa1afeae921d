use serde::{Deserialize, Serialize};

use super::encoder::EncoderParams;
use crate::backend::{build_prompt, Planner};
use crate::embed::cosine_unchecked;
use crate::env::{score_with_reward, MetricKind, Question};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Candidate paths for one question and, once evaluated, their scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathPool {
    pub paths: Vec<Vec<String>>,
    /// Δ of each path, filled by [`evaluate_pool`].
    #[serde(default)]
    pub scores: Vec<f64>,
    /// Paths whose backend call failed (scored 0).
    #[serde(default)]
    pub failed: Vec<bool>,
    pub best_index: Option<usize>,
}

impl PathPool {
    pub fn new(paths: Vec<Vec<String>>) -> Self {
        Self { paths, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best_index.map(|i| self.scores[i])
    }
}

/// Runs the planner once per candidate and marks the best-scoring path
/// (ties go to the lowest index). A failed backend call scores 0.
pub fn evaluate_pool(question: &Question, pool: PathPool, planner: &dyn Planner, metric: MetricKind) -> Result<PathPool> {
    if pool.is_empty() {
        return Err(Error::Precondition(format!("empty path pool for {}", question.question_id)));
    }
    let mut pool = pool;
    pool.scores.clear();
    pool.failed.clear();
    for path in &pool.paths {
        let prompt = build_prompt(&question.text, path, planner.template());
        match planner.plan(question, &prompt) {
            Ok(outcome) => {
                pool.scores.push(score_with_reward(metric, &outcome.answer, &question.answer, outcome.reward));
                pool.failed.push(false);
            }
            Err(e) => {
                log::warn!("backend failed on {}: {e}", question.question_id);
                pool.scores.push(0.0);
                pool.failed.push(true);
            }
        }
    }
    let mut best = 0;
    for (i, &s) in pool.scores.iter().enumerate() {
        if s > pool.scores[best] {
            best = i;
        }
    }
    pool.best_index = Some(best);
    Ok(pool)
}

/// Cosine between the encoded question and each encoded candidate.
pub fn path_scores<F: Scalar>(params: &EncoderParams<F>, question: &str, candidates: &[Vec<String>]) -> Vec<F> {
    let q = params.encode_question(question);
    candidates.iter().map(|c| cosine_unchecked(&q, &params.encode_path(c))).collect()
}

/// Index of the candidate whose encoding is most similar to the question's
/// (ties go to the lowest index).
pub fn select_path<F: Scalar>(params: &EncoderParams<F>, question: &str, candidates: &[Vec<String>]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::NotFound("no candidate paths to select from".into()));
    }
    let scores = path_scores(params, question, candidates);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}
