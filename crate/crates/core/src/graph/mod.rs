//! The instruction graph: nodes are sets of similar instructions, edges carry
//! the tasks (and their questions) whose successful paths used that
//! transition.
//!
//! Construction follows the incremental rule: every instruction of a path is
//! matched against the closest stored instruction outside the node that holds
//! its predecessor; a match at or above `delta` joins that node, otherwise a
//! fresh node is opened. Consecutive instructions therefore never share a
//! node, and recurring instructions turn into junctions through which
//! unseen paths can later be recombined.

mod index;
mod io;
mod types;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::Serialize;

use crate::embed::{cosine_unchecked, embed_text, EmbedderConfig};
use crate::env::TaskCorpus;
use crate::error::{Error, Result};
use crate::Embedding;

pub use index::{EdgeTaskSummary, GraphIndex};
pub use io::{load_graph, save_graph, GRAPH_FORMAT_VERSION};
pub use types::{
    render_instructions, validate_instruction_text, Instruction, InstructionPath, NodeId, Provenance, QuestionId,
    TaskId, PATH_SEPARATOR,
};

/// Success threshold a recorded path must reach to be inserted.
pub const DEFAULT_CORRECT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    pub id: NodeId,
    pub instructions: Vec<Instruction>,
}

impl NodeSet {
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.instructions.iter().map(|i| i.text.as_str())
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.instructions.iter().any(|i| i.text == text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub from: NodeId,
    pub to: NodeId,
    pub tasks: BTreeMap<TaskId, BTreeSet<QuestionId>>,
}

/// A question whose path has been inserted; kept so traversal states can
/// compare a new query against the questions recorded on an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionEntry {
    pub task_id: TaskId,
    pub text: String,
    pub embedding: Embedding,
}

/// Result of a nearest-instruction lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Nearest {
    pub node: NodeId,
    /// Position of the instruction inside its node.
    pub index: usize,
    pub text: String,
    pub psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub instruction_count: usize,
    pub task_count: usize,
    pub mean_node_size: f64,
}

#[derive(Debug, Clone)]
pub struct InstructionGraph {
    delta: f64,
    embedder: EmbedderConfig,
    nodes: BTreeMap<NodeId, NodeSet>,
    edges: BTreeMap<(NodeId, NodeId), EdgeSet>,
    questions: BTreeMap<QuestionId, QuestionEntry>,
    /// Next node id to hand out (one past the largest id used).
    ic: NodeId,
    /// One plus the number of edges created.
    tc: u64,
    index: OnceLock<GraphIndex>,
}

impl PartialEq for InstructionGraph {
    fn eq(&self, other: &Self) -> bool {
        self.delta.to_bits() == other.delta.to_bits()
            && self.embedder == other.embedder
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.questions == other.questions
            && self.ic == other.ic
            && self.tc == other.tc
    }
}

impl InstructionGraph {
    pub fn new(delta: f64, embedder: EmbedderConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1], got {delta}")));
        }
        embedder.validate()?;
        Ok(Self {
            delta,
            embedder,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            questions: BTreeMap::new(),
            ic: 1,
            tc: 1,
            index: OnceLock::new(),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn embedder(&self) -> &EmbedderConfig {
        &self.embedder
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSet> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeSet> {
        self.nodes.values()
    }

    pub fn edge(&self, from: NodeId, to: NodeId) -> Option<&EdgeSet> {
        self.edges.get(&(from, to))
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeSet> {
        self.edges.values()
    }

    pub fn question(&self, id: &QuestionId) -> Option<&QuestionEntry> {
        self.questions.get(id)
    }

    pub fn questions(&self) -> impl Iterator<Item = (&QuestionId, &QuestionEntry)> {
        self.questions.iter()
    }

    /// Algorithm counters `(IC, TC)`.
    pub fn counters(&self) -> (NodeId, u64) {
        (self.ic, self.tc)
    }

    /// Out-neighbours of `node` in ascending id order.
    pub fn successors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges.range((node, NodeId::MIN)..=(node, NodeId::MAX)).map(|(&(_, to), _)| to)
    }

    /// Derived lookup tables used by traversal. Built lazily, dropped on
    /// every mutation.
    pub fn index(&self) -> &GraphIndex {
        self.index.get_or_init(|| GraphIndex::build(self))
    }

    pub fn embed(&self, text: &str) -> Embedding {
        embed_text(text, &self.embedder)
    }

    /// Closest stored instruction outside `excluded`. Ties go to the lowest
    /// node id, then to the lexicographically smallest text.
    pub fn knn_nearest(&self, query: &Embedding, excluded: Option<NodeId>) -> Result<Nearest> {
        if query.dimension() != self.embedder.dimension {
            return Err(Error::Config(format!(
                "query has dimension {}, graph embeds into {}",
                query.dimension(),
                self.embedder.dimension
            )));
        }
        let mut best: Option<(f32, NodeId, usize, &str)> = None;
        for node in self.nodes.values().filter(|n| Some(n.id) != excluded) {
            for (i, instr) in node.instructions.iter().enumerate() {
                let psi = cosine_unchecked(query, &instr.embedding);
                let better = match best {
                    None => true,
                    Some((b, bn, _, bt)) => {
                        psi > b || (psi == b && (node.id < bn || (node.id == bn && instr.text.as_str() < bt)))
                    }
                };
                if better {
                    best = Some((psi, node.id, i, instr.text.as_str()));
                }
            }
        }
        best.map(|(psi, node, index, text)| Nearest { node, index, text: text.to_owned(), psi: f64::from(psi) })
            .ok_or_else(|| Error::NotFound("no stored instruction outside the excluded node".into()))
    }

    /// Inserts one path and returns the node each instruction landed in.
    pub fn insert_path(&mut self, path: &InstructionPath, question_text: &str) -> Result<Vec<NodeId>> {
        let question = self.embed(question_text);
        let embeddings = path.instructions.iter().map(|t| self.embed(t)).collect();
        self.insert_embedded(path, question_text, question, embeddings)
    }

    /// [`insert_path`](Self::insert_path) with caller-supplied embeddings for
    /// the question and for every instruction (in path order).
    pub fn insert_embedded(
        &mut self,
        path: &InstructionPath,
        question_text: &str,
        question_embedding: Embedding,
        embeddings: Vec<Embedding>,
    ) -> Result<Vec<NodeId>> {
        path.validate()?;
        let dim = self.embedder.dimension;
        if embeddings.len() != path.len() {
            return Err(Error::Precondition(format!(
                "{} embeddings for a path of {} instructions",
                embeddings.len(),
                path.len()
            )));
        }
        if question_embedding.dimension() != dim || embeddings.iter().any(|e| e.dimension() != dim) {
            return Err(Error::Config(format!("embeddings must have dimension {dim}")));
        }
        if embeddings.iter().any(|e| !e.valid) {
            return Err(Error::Data(format!("question {}: instruction with an invalid embedding", path.question_id)));
        }
        self.index.take();

        if let Some(existing) = self.questions.get(&path.question_id) {
            if existing.task_id != path.task_id {
                return Err(Error::Data(format!(
                    "question id {} already registered under task {}",
                    path.question_id, existing.task_id
                )));
            }
        } else {
            self.questions.insert(
                path.question_id.clone(),
                QuestionEntry {
                    task_id: path.task_id.clone(),
                    text: question_text.to_owned(),
                    embedding: question_embedding,
                },
            );
        }

        let mut placed = Vec::with_capacity(path.len());
        let mut prev: Option<NodeId> = None;
        for (position, (text, embedding)) in path.instructions.iter().zip(embeddings).enumerate() {
            let target = match self.knn_nearest(&embedding, prev) {
                Ok(hit) if hit.psi >= self.delta => hit.node,
                _ => self.open_node(),
            };
            let source = Provenance { task_id: path.task_id.clone(), question_id: path.question_id.clone(), position };
            let node = self.nodes.get_mut(&target).expect("target node exists");
            match node.instructions.iter_mut().find(|i| i.text == *text) {
                Some(instr) => instr.sources.push(source),
                None => node.instructions.push(Instruction { text: text.clone(), embedding, sources: vec![source] }),
            }
            if let Some(from) = prev {
                self.link(from, target, &path.task_id, &path.question_id);
            }
            placed.push(target);
            prev = Some(target);
        }
        Ok(placed)
    }

    fn open_node(&mut self) -> NodeId {
        let id = self.ic;
        self.ic += 1;
        self.nodes.insert(id, NodeSet { id, instructions: Vec::new() });
        id
    }

    fn link(&mut self, from: NodeId, to: NodeId, task: &TaskId, question: &QuestionId) {
        let tc = &mut self.tc;
        let edge = self.edges.entry((from, to)).or_insert_with(|| {
            *tc += 1;
            EdgeSet { from, to, tasks: BTreeMap::new() }
        });
        edge.tasks.entry(task.clone()).or_default().insert(question.clone());
    }

    /// Inserts the best correct path of every question, in corpus order.
    /// Questions without a correct path are skipped.
    pub fn insert_corpus(&mut self, corpus: &TaskCorpus) -> Result<()> {
        for question in corpus.questions() {
            if let Some(path) = question.gold_path(DEFAULT_CORRECT_THRESHOLD) {
                self.insert_path(&path, &question.text)?;
            }
        }
        Ok(())
    }

    /// Node sequence of an already inserted question's path, recovered from
    /// provenance. `None` when the question was never inserted.
    pub fn path_nodes(&self, question: &QuestionId) -> Option<Vec<NodeId>> {
        let mut by_position: BTreeMap<usize, NodeId> = BTreeMap::new();
        for node in self.nodes.values() {
            for instr in &node.instructions {
                for s in instr.sources.iter().filter(|s| &s.question_id == question) {
                    by_position.entry(s.position).or_insert(node.id);
                }
            }
        }
        if by_position.is_empty() {
            return None;
        }
        Some(by_position.into_values().collect())
    }

    pub fn stats(&self) -> GraphStats {
        graph_stats(self)
    }

    pub(crate) fn from_parts(
        delta: f64,
        embedder: EmbedderConfig,
        nodes: BTreeMap<NodeId, NodeSet>,
        edges: BTreeMap<(NodeId, NodeId), EdgeSet>,
        questions: BTreeMap<QuestionId, QuestionEntry>,
        counters: (NodeId, u64),
    ) -> Self {
        Self { delta, embedder, nodes, edges, questions, ic: counters.0, tc: counters.1, index: OnceLock::new() }
    }
}

pub fn build_graph(support: &TaskCorpus, delta: f64, embedder: EmbedderConfig) -> Result<InstructionGraph> {
    let mut graph = InstructionGraph::new(delta, embedder)?;
    graph.insert_corpus(support)?;
    Ok(graph)
}

/// Copy-extends `graph` with a new support set; the input is left untouched.
pub fn extend_graph(graph: &InstructionGraph, new_support: &TaskCorpus) -> Result<InstructionGraph> {
    let mut extended = graph.clone();
    extended.insert_corpus(new_support)?;
    Ok(extended)
}

pub fn graph_stats(graph: &InstructionGraph) -> GraphStats {
    let node_count = graph.nodes.len();
    let instruction_count: usize = graph.nodes.values().map(|n| n.instructions.len()).sum();
    let tasks: BTreeSet<&TaskId> = graph
        .nodes
        .values()
        .flat_map(|n| n.instructions.iter())
        .flat_map(|i| i.sources.iter().map(|s| &s.task_id))
        .collect();
    GraphStats {
        node_count,
        edge_count: graph.edges.len(),
        instruction_count,
        task_count: tasks.len(),
        mean_node_size: if node_count == 0 { 0.0 } else { instruction_count as f64 / node_count as f64 },
    }
}
