//! Policy-guided depth-first search that turns a query into candidate
//! instruction paths.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_state, Action, Episode, PolicyParams, Step};
use crate::embed::cosine_unchecked;
use crate::error::{Error, Result};
use crate::graph::{InstructionGraph, NodeId};
use crate::scalar::Scalar;
use crate::Embedding;

/// Named action masks. A hook that fires forces "exclude" without
/// consulting the policy; such forced decisions are not part of the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleHook {
    /// A `Lookup[...]` may only be appended once the path holds a
    /// `Search[...]`.
    #[serde(rename = "no-lookup-before-search")]
    NoLookupBeforeSearch,
    /// A `Search[...]` already on the path may not be appended again.
    #[serde(rename = "no-repeat-search")]
    NoRepeatSearch,
}

impl RuleHook {
    /// Every built-in hook; all of them suit the synthetic world.
    pub const ALL: [RuleHook; 2] = [RuleHook::NoLookupBeforeSearch, RuleHook::NoRepeatSearch];

    pub fn forbids(&self, path: &[String], next: &str) -> bool {
        match self {
            RuleHook::NoLookupBeforeSearch => {
                next.trim_start().starts_with("Lookup[") && !path.iter().any(|p| p.trim_start().starts_with("Search["))
            }
            RuleHook::NoRepeatSearch => {
                next.trim_start().starts_with("Search[") && path.iter().any(|p| p.trim() == next.trim())
            }
        }
    }
}

impl std::str::FromStr for RuleHook {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-lookup-before-search" => Ok(RuleHook::NoLookupBeforeSearch),
            "no-repeat-search" => Ok(RuleHook::NoRepeatSearch),
            other => Err(Error::Config(format!("unknown rule hook {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub k: usize,
    pub max_path_len: usize,
    pub max_nodes_visited: usize,
    pub rule_hooks: Vec<RuleHook>,
    /// Subtract a running mean of recent rewards from the return.
    pub use_baseline: bool,
    pub baseline_window: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            discount: 0.99,
            k: 3,
            max_path_len: 16,
            max_nodes_visited: 256,
            rule_hooks: Vec::new(),
            use_baseline: true,
            baseline_window: 64,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.max_path_len == 0 || self.max_nodes_visited == 0 {
            return Err(Error::Config("max_path_len and max_nodes_visited must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::Config(format!("discount {} outside [0, 1]", self.discount)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.use_baseline && self.baseline_window == 0 {
            return Err(Error::Config("baseline_window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Draw each action from the policy.
    Sample,
    /// Take the more likely action (include on ties).
    Greedy,
}

/// Result of one search: the emitted paths plus the decisions that were not
/// attributed to any of them (everything, when nothing was emitted).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Traversal {
    pub candidates: Vec<Candidate>,
    pub unattributed: Vec<Step>,
}

/// One emitted path with the node each instruction came from and the
/// decisions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub instructions: Vec<String>,
    pub nodes: Vec<NodeId>,
    pub episode: Episode,
}

/// Runs the policy-guided search for `query`.
///
/// Start nodes are the `K` nodes holding the most query-similar
/// instructions. At each visited node the policy sees [`build_state`]; on
/// include, the node's most query-similar instruction is appended and the
/// out-neighbours are explored in order of their best task-centroid cosine.
/// A path is emitted when a node is included and none of its children is
/// (exclusion, dead end or length limit). A path never re-uses an edge, so
/// nodes may recur but every walk is finite. Search stops after `K`
/// distinct paths or `max_nodes_visited` visits.
pub fn traverse<F: Scalar, R: Rng + ?Sized>(
    graph: &InstructionGraph,
    query: &str,
    params: &PolicyParams<F>,
    config: &RlConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<Traversal> {
    traverse_embedded(graph, &graph.embed(query), params, config, mode, rng)
}

/// [`traverse`] for an already embedded query.
pub fn traverse_embedded<F: Scalar, R: Rng + ?Sized>(
    graph: &InstructionGraph,
    q: &Embedding,
    params: &PolicyParams<F>,
    config: &RlConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<Traversal> {
    config.validate()?;
    params.check_finite()?;
    if graph.is_empty() {
        return Err(Error::NotFound("cannot traverse an empty graph".into()));
    }
    if q.dimension() != graph.embedder().dimension {
        return Err(Error::Config(format!(
            "query has dimension {}, graph embeds into {}",
            q.dimension(),
            graph.embedder().dimension
        )));
    }
    let mut starts: Vec<(f32, NodeId)> = graph
        .nodes()
        .map(|n| {
            let best = n.instructions.iter().map(|i| cosine_unchecked(q, &i.embedding)).fold(f32::MIN, f32::max);
            (best, n.id)
        })
        .collect();
    starts.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    starts.truncate(config.k);

    let mut walker = Walker {
        graph,
        q,
        params,
        config,
        mode,
        rng,
        visits: 0,
        log: Vec::new(),
        last_emit: 0,
        path: Vec::new(),
        used_edges: Vec::new(),
        emitted: HashSet::new(),
        candidates: Vec::new(),
    };
    for &(_, start) in &starts {
        if walker.done() {
            break;
        }
        walker.visit(start, None)?;
    }
    let unattributed = walker.log[walker.last_emit..].to_vec();
    Ok(Traversal { candidates: walker.candidates, unattributed })
}

struct Frame {
    node: NodeId,
    instruction: String,
    step: usize,
}

struct Walker<'a, F, R: ?Sized> {
    graph: &'a InstructionGraph,
    q: &'a Embedding,
    params: &'a PolicyParams<F>,
    config: &'a RlConfig,
    mode: Mode,
    rng: &'a mut R,
    visits: usize,
    /// Every policy decision in visiting order.
    log: Vec<Step>,
    /// Start of the decisions not yet attributed to an emitted path.
    last_emit: usize,
    path: Vec<Frame>,
    used_edges: Vec<(NodeId, NodeId)>,
    emitted: HashSet<Vec<String>>,
    candidates: Vec<Candidate>,
}

impl<F: Scalar, R: Rng + ?Sized> Walker<'_, F, R> {
    fn k_reached(&self) -> bool {
        self.candidates.len() >= self.config.k
    }

    fn done(&self) -> bool {
        self.k_reached() || self.visits >= self.config.max_nodes_visited
    }

    /// Returns whether the node was included.
    fn visit(&mut self, node: NodeId, in_edge: Option<(NodeId, NodeId)>) -> Result<bool> {
        if self.done() {
            return Ok(false);
        }
        self.visits += 1;
        let set = self.graph.node(node).ok_or_else(|| Error::NotFound(format!("node {node}")))?;
        let mut best: Option<(f32, &str)> = None;
        for instr in &set.instructions {
            let c = cosine_unchecked(self.q, &instr.embedding);
            if best.is_none_or(|(b, t)| c > b || (c == b && instr.text.as_str() < t)) {
                best = Some((c, instr.text.as_str()));
            }
        }
        let Some((_, instruction)) = best else { return Ok(false) };
        let instruction = instruction.to_owned();

        let so_far: Vec<String> = self.path.iter().map(|f| f.instruction.clone()).collect();
        if self.config.rule_hooks.iter().any(|h| h.forbids(&so_far, &instruction)) {
            return Ok(false);
        }

        let state = build_state(self.graph, self.q, node, in_edge)?;
        let fwd = self.params.forward(&state);
        let p_include = fwd.probs[0].as_f64();
        let action = match self.mode {
            Mode::Greedy => {
                if fwd.probs[0] >= fwd.probs[1] {
                    Action::Include
                } else {
                    Action::Exclude
                }
            }
            Mode::Sample => {
                if self.rng.random::<f64>() < p_include {
                    Action::Include
                } else {
                    Action::Exclude
                }
            }
        };
        let prob = fwd.probs[action.output_index()].as_f64();
        self.log.push(Step { state, action, log_prob: prob.max(super::policy::CLAMP).ln() });
        if action == Action::Exclude {
            return Ok(false);
        }

        self.path.push(Frame { node, instruction, step: self.log.len() - 1 });
        if let Some(e) = in_edge {
            self.used_edges.push(e);
        }

        let mut any_child = false;
        if self.path.len() < self.config.max_path_len {
            let index = self.graph.index();
            let mut children: Vec<(f64, NodeId)> = self
                .graph
                .successors(node)
                .filter(|&c| !self.used_edges.contains(&(node, c)))
                .map(|c| (index.best_task(node, c, self.q).map_or(f64::NEG_INFINITY, |(_, s)| s), c))
                .collect();
            children.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (_, child) in children {
                if self.done() {
                    break;
                }
                if self.visit(child, Some((node, child)))? {
                    any_child = true;
                }
            }
        }
        if !any_child && !self.k_reached() {
            self.emit();
        }

        self.path.pop();
        if in_edge.is_some() {
            self.used_edges.pop();
        }
        Ok(true)
    }

    fn emit(&mut self) {
        let instructions: Vec<String> = self.path.iter().map(|f| f.instruction.clone()).collect();
        let mut step_ids: Vec<usize> = self.path.iter().map(|f| f.step).filter(|&s| s < self.last_emit).collect();
        step_ids.extend(self.last_emit..self.log.len());
        self.last_emit = self.log.len();
        if instructions.is_empty() || !self.emitted.insert(instructions.clone()) {
            return;
        }
        let steps = step_ids.into_iter().map(|i| self.log[i].clone()).collect();
        self.candidates.push(Candidate {
            instructions,
            nodes: self.path.iter().map(|f| f.node).collect(),
            episode: Episode { steps, terminal_reward: 0.0 },
        });
    }
}
