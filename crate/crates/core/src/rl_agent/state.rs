use serde::{Deserialize, Serialize};

use crate::embed::cosine_unchecked;
use crate::error::{Error, Result};
use crate::graph::{InstructionGraph, NodeId};
use crate::Embedding;

/// What the policy sees at a node: the best instruction cosine, the best
/// task-centroid cosine on the incoming edge, and the best question cosine
/// inside that task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraversalState {
    pub s: [f64; 3],
}

impl TraversalState {
    pub fn new(s: [f64; 3]) -> Self {
        Self { s }
    }
}

/// Builds the state for visiting `node` through `in_edge`. Without an
/// incoming edge the task and question components are 0.
pub fn build_state(
    graph: &InstructionGraph,
    query: &Embedding,
    node: NodeId,
    in_edge: Option<(NodeId, NodeId)>,
) -> Result<TraversalState> {
    let set = graph.node(node).ok_or_else(|| Error::NotFound(format!("node {node}")))?;
    let s1 = set
        .instructions
        .iter()
        .map(|i| f64::from(cosine_unchecked(query, &i.embedding)))
        .fold(f64::NEG_INFINITY, f64::max);
    let s1 = if s1.is_finite() { s1 } else { 0.0 };

    let (s2, s3) = match in_edge {
        None => (0.0, 0.0),
        Some((from, to)) => {
            if to != node {
                return Err(Error::Precondition(format!("edge ({from}, {to}) does not enter node {node}")));
            }
            let index = graph.index();
            match index.best_task(from, to, query) {
                None => (0.0, 0.0),
                Some((c, s2)) => {
                    let s3 = index.edge_tasks(from, to)[c]
                        .questions
                        .iter()
                        .map(|q| f64::from(cosine_unchecked(query, q)))
                        .fold(f64::NEG_INFINITY, f64::max);
                    (s2, s3)
                }
            }
        }
    };
    Ok(TraversalState { s: [s1, s2, s3] })
}
