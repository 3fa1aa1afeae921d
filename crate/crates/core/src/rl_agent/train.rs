use std::collections::{BTreeSet, VecDeque};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_state, Action, Episode, PolicyParams, RlConfig, TraversalState, PARAM_COUNT};
use crate::embed::cosine_unchecked;
use crate::env::TaskCorpus;
use crate::error::{Error, Result};
use crate::graph::{InstructionGraph, NodeId, QuestionId, DEFAULT_CORRECT_THRESHOLD};
use crate::optim::Adam;
use crate::scalar::Scalar;

/// One supervised example: the state of visiting `node` while answering
/// `question`, labelled by whether the node lies on that question's path.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmstartSample {
    pub state: TraversalState,
    pub label: bool,
    pub node: NodeId,
    pub in_edge: Option<(NodeId, NodeId)>,
    pub question_id: QuestionId,
}

/// Labelled states for the supervised warm start. Positives are the nodes
/// of each question's inserted path, reached through the path's own edges,
/// always including the first node (seen without an incoming edge, as at a
/// traversal start). Negatives are, in order: the most query-similar
/// off-path node seen as a start, off-path successors of path nodes (hard
/// negatives), then random off-path nodes. Each question contributes at
/// most `samples_per_question` samples, split evenly where both kinds
/// exist. Questions whose path is not in the graph are skipped.
pub fn make_warmstart_dataset(
    graph: &InstructionGraph,
    support: &TaskCorpus,
    samples_per_question: usize,
    seed: u64,
) -> Result<Vec<WarmstartSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_nodes: Vec<NodeId> = graph.nodes().map(|n| n.id).collect();
    let mut out = Vec::new();
    for question in support.questions() {
        if question.gold_path(DEFAULT_CORRECT_THRESHOLD).is_none() {
            continue;
        }
        let Some(nodes) = graph.path_nodes(&question.question_id) else { continue };
        let q = graph.embed(&question.text);
        let on_path: BTreeSet<NodeId> = nodes.iter().copied().collect();

        let mut positives: Vec<(NodeId, Option<(NodeId, NodeId)>)> = Vec::new();
        for (k, &n) in nodes.iter().enumerate() {
            let edge = (k > 0).then(|| (nodes[k - 1], n));
            if !positives.contains(&(n, edge)) {
                positives.push((n, edge));
            }
        }
        let mut hard: Vec<(NodeId, Option<(NodeId, NodeId)>)> = Vec::new();
        for &n in &nodes {
            for c in graph.successors(n).filter(|c| !on_path.contains(c)) {
                if !hard.contains(&(c, Some((n, c)))) {
                    hard.push((c, Some((n, c))));
                }
            }
        }
        let off_path: Vec<NodeId> = all_nodes.iter().copied().filter(|n| !on_path.contains(n)).collect();

        positives[1..].shuffle(&mut rng);
        hard.shuffle(&mut rng);
        let n_pos = positives.len().min(samples_per_question.div_ceil(2));
        let want_neg = samples_per_question - n_pos;
        let start_negative = graph
            .nodes()
            .filter(|n| !on_path.contains(&n.id))
            .map(|n| (n.instructions.iter().map(|i| cosine_unchecked(&q, &i.embedding)).fold(f32::MIN, f32::max), n.id))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, id)| (id, None));
        let mut negatives: Vec<(NodeId, Option<(NodeId, NodeId)>)> =
            start_negative.into_iter().chain(hard).take(want_neg).collect();
        let mut attempts = 0;
        while negatives.len() < want_neg && !off_path.is_empty() && attempts < 4 * want_neg {
            attempts += 1;
            let n = *off_path.choose(&mut rng).expect("non-empty");
            let preds: Vec<NodeId> = all_nodes.iter().copied().filter(|&p| graph.edge(p, n).is_some()).collect();
            let edge = preds.choose(&mut rng).map(|&p| (p, n));
            if !negatives.contains(&(n, edge)) {
                negatives.push((n, edge));
            }
        }

        for (label, items) in [(true, &positives[..n_pos]), (false, &negatives[..])] {
            for &(node, in_edge) in items {
                out.push(WarmstartSample {
                    state: build_state(graph, &q, node, in_edge)?,
                    label,
                    node,
                    in_edge,
                    question_id: question.question_id.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// One optimizer step on the mean binary cross-entropy of the batch.
/// Returns the loss before the step.
pub fn warmstart_step<F: Scalar>(
    params: &mut PolicyParams<F>,
    optimizer: &mut Adam<F>,
    batch: &[(TraversalState, bool)],
) -> Result<F> {
    params.check_finite()?;
    let (loss, grad) = params.bce_loss_grad(batch);
    optimizer.step(&mut params.data, &grad)?;
    Ok(loss)
}

/// Running mean over the most recent terminal rewards.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Baseline {
    window: VecDeque<f64>,
    capacity: usize,
}

impl Baseline {
    pub fn new(capacity: usize) -> Self {
        Self { window: VecDeque::with_capacity(capacity), capacity: capacity.max(1) }
    }

    /// Mean of the stored rewards, 0 when empty.
    pub fn value(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window.iter().sum::<f64>() / self.window.len() as f64
        }
    }

    pub fn record(&mut self, reward: f64) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(reward);
    }
}

/// REINFORCE loss `Σ_t -A_t log π(a_t | s_t)` with
/// `A_t = γ^(T-1-t) (r - b)` and its gradient.
pub fn reinforce_loss_grad<F: Scalar>(
    params: &PolicyParams<F>,
    episode: &Episode,
    discount: f64,
    baseline: f64,
) -> (F, Vec<F>) {
    let mut grad = vec![F::zero(); PARAM_COUNT];
    let mut loss = F::zero();
    let t_len = episode.steps.len();
    for (t, step) in episode.steps.iter().enumerate() {
        let advantage = discount.powi((t_len - 1 - t) as i32) * (episode.terminal_reward - baseline);
        let a = F::of(advantage);
        let fwd = params.forward(&step.state);
        let idx = step.action.output_index();
        let mut dz = fwd.probs;
        dz[idx] = dz[idx] - F::one();
        params.backprop(&fwd, [a * dz[0], a * dz[1]], &mut grad);
        loss = loss - a * fwd.probs[idx].max(F::of(super::policy::CLAMP)).ln();
    }
    (loss, grad)
}

/// One policy-gradient step on `episode`. When a baseline is given, its
/// current value is subtracted first and the episode reward recorded
/// afterwards. Returns the loss before the step.
pub fn pg_update<F: Scalar>(
    params: &mut PolicyParams<F>,
    optimizer: &mut Adam<F>,
    episode: &Episode,
    config: &RlConfig,
    baseline: Option<&mut Baseline>,
) -> Result<F> {
    if episode.steps.is_empty() {
        return Err(Error::Precondition("policy-gradient update on an empty episode".into()));
    }
    params.check_finite()?;
    let b = baseline.as_ref().map_or(0.0, |b| b.value());
    let (loss, grad) = reinforce_loss_grad(params, episode, config.discount, b);
    optimizer.step(&mut params.data, &grad)?;
    if let Some(b) = baseline {
        b.record(episode.terminal_reward);
    }
    Ok(loss)
}

/// Draws an action from the policy.
pub fn sample_action<F: Scalar, R: Rng + ?Sized>(
    params: &PolicyParams<F>,
    state: &TraversalState,
    rng: &mut R,
) -> Action {
    let p = params.forward(state).probs[0].as_f64();
    if rng.random::<f64>() < p {
        Action::Include
    } else {
        Action::Exclude
    }
}
