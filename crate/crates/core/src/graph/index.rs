use std::collections::HashMap;

use super::{InstructionGraph, NodeId, TaskId};
use crate::embed::{cosine_unchecked, task_centroid};
use crate::Embedding;

/// Per-edge, per-task summary: the task centroid over the questions recorded
/// on the edge plus those question embeddings themselves.
#[derive(Debug, Clone)]
pub struct EdgeTaskSummary {
    pub task_id: TaskId,
    pub centroid: Embedding,
    pub questions: Vec<Embedding>,
}

/// Read-only lookup tables derived from a finished graph.
#[derive(Debug, Clone, Default)]
pub struct GraphIndex {
    edge_tasks: HashMap<(NodeId, NodeId), Vec<EdgeTaskSummary>>,
}

impl GraphIndex {
    pub(super) fn build(graph: &InstructionGraph) -> Self {
        let mut edge_tasks = HashMap::with_capacity(graph.edges.len());
        for (&key, edge) in &graph.edges {
            let mut summaries = Vec::with_capacity(edge.tasks.len());
            for (task_id, question_ids) in &edge.tasks {
                let questions: Vec<Embedding> = question_ids
                    .iter()
                    .filter_map(|q| graph.questions.get(q))
                    .map(|q| q.embedding.clone())
                    .collect();
                if questions.is_empty() {
                    continue;
                }
                let refs: Vec<&Embedding> = questions.iter().collect();
                let centroid = task_centroid(&refs).expect("non-empty question list");
                summaries.push(EdgeTaskSummary { task_id: task_id.clone(), centroid, questions });
            }
            edge_tasks.insert(key, summaries);
        }
        Self { edge_tasks }
    }

    pub fn edge_tasks(&self, from: NodeId, to: NodeId) -> &[EdgeTaskSummary] {
        self.edge_tasks.get(&(from, to)).map_or(&[], Vec::as_slice)
    }

    /// The best task-centroid cosine on an edge and the position of that task
    /// (first maximum in task-id order). `None` for edges without questions.
    pub fn best_task(&self, from: NodeId, to: NodeId, query: &Embedding) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in self.edge_tasks(from, to).iter().enumerate() {
            let c = f64::from(cosine_unchecked(query, &t.centroid));
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        best
    }
}
