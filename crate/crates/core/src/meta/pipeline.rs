use rand::Rng;

use crate::backend::{build_prompt, Planner};
use crate::env::{score_with_reward, MetricKind, Question};
use crate::error::Result;
use crate::graph::InstructionGraph;
use crate::ml_agent::{select_path, EncoderParams};
use crate::rl_agent::{traverse, Episode, Mode, PolicyParams, RlConfig, Traversal};

/// The pieces shared by every question of a run.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub graph: &'a InstructionGraph,
    pub planner: &'a dyn Planner,
    pub metric: MetricKind,
}

/// One pass of search, selection and planning for a question.
#[derive(Debug, Clone)]
pub struct Attempt {
    pub traversal: Traversal,
    /// Index of the chosen candidate, `None` when the search found nothing.
    pub selected: Option<usize>,
    pub path: Vec<String>,
    pub answer: String,
    pub delta: f64,
    /// The planner failed; the attempt scored 0.
    pub backend_failed: bool,
}

impl Attempt {
    /// The decisions to reinforce with this attempt's Δ: the selected
    /// candidate's episode or, when nothing was emitted, every decision made.
    pub fn episode(&self) -> Episode {
        let steps = match self.selected {
            Some(i) => self.traversal.candidates[i].episode.steps.clone(),
            None => self.traversal.unattributed.clone(),
        };
        Episode { steps, terminal_reward: self.delta }
    }

    pub fn candidate_paths(&self) -> Vec<Vec<String>> {
        self.traversal.candidates.iter().map(|c| c.instructions.clone()).collect()
    }
}

/// Traverses the graph, lets the encoder pick a candidate, renders the
/// prompt and scores the planner's answer. Backend failures score 0 instead
/// of aborting.
pub fn answer_question<R: Rng + ?Sized>(
    pipeline: &Pipeline<'_>,
    rl: &PolicyParams<f64>,
    ml: &EncoderParams<f64>,
    rl_config: &RlConfig,
    question: &Question,
    mode: Mode,
    rng: &mut R,
) -> Result<Attempt> {
    let traversal = traverse(pipeline.graph, &question.text, rl, rl_config, mode, rng)?;
    let paths: Vec<Vec<String>> = traversal.candidates.iter().map(|c| c.instructions.clone()).collect();
    let selected = if paths.is_empty() { None } else { Some(select_path(ml, &question.text, &paths)?) };
    let path = selected.map(|i| paths[i].clone()).unwrap_or_default();
    let (answer, delta, backend_failed) = run_planner(pipeline, question, &path);
    Ok(Attempt { traversal, selected, path, answer, delta, backend_failed })
}

/// Plans with a fixed path. Returns `(answer, Δ, failed)`.
pub(crate) fn run_planner(pipeline: &Pipeline<'_>, question: &Question, path: &[String]) -> (String, f64, bool) {
    let prompt = build_prompt(&question.text, path, pipeline.planner.template());
    match pipeline.planner.plan(question, &prompt) {
        Ok(outcome) => {
            let delta = score_with_reward(pipeline.metric, &outcome.answer, &question.answer, outcome.reward);
            (outcome.answer, delta, false)
        }
        Err(e) => {
            log::warn!("planner failed on {}: {e}", question.question_id);
            (String::new(), 0.0, true)
        }
    }
}
