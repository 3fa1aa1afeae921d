//! Versioned JSON persistence. Embeddings are stored as hex-encoded
//! little-endian `f32` words so a save/load cycle is bit-exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EdgeSet, Instruction, InstructionGraph, NodeId, NodeSet, Provenance, QuestionEntry, QuestionId, TaskId};
use crate::embed::{EmbedderConfig, EmbeddingVector};
use crate::error::{Error, Result};
use crate::scalar::{from_hex, to_hex};
use crate::Embedding;

pub const GRAPH_FORMAT_VERSION: &str = "1";

#[derive(Serialize, Deserialize)]
struct GraphFile {
    header: Header,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    questions: Vec<QuestionRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: String,
    delta: f64,
    embedder_config: EmbedderConfig,
    scalar: String,
    ic: NodeId,
    tc: u64,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    node_id: NodeId,
    instructions: Vec<InstructionRecord>,
}

#[derive(Serialize, Deserialize)]
struct InstructionRecord {
    text: String,
    embedding: String,
    sources: Vec<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    from: NodeId,
    to: NodeId,
    tasks: Vec<EdgeTaskRecord>,
}

#[derive(Serialize, Deserialize)]
struct EdgeTaskRecord {
    task_id: TaskId,
    question_ids: Vec<QuestionId>,
}

#[derive(Serialize, Deserialize)]
struct QuestionRecord {
    question_id: QuestionId,
    task_id: TaskId,
    text: String,
    embedding: String,
}

pub fn save_graph(graph: &InstructionGraph, destination: &Path) -> Result<()> {
    let file = GraphFile {
        header: Header {
            format_version: GRAPH_FORMAT_VERSION.into(),
            delta: graph.delta,
            embedder_config: graph.embedder,
            scalar: "f32".into(),
            ic: graph.ic,
            tc: graph.tc,
        },
        nodes: graph
            .nodes
            .values()
            .map(|n| NodeRecord {
                node_id: n.id,
                instructions: n
                    .instructions
                    .iter()
                    .map(|i| InstructionRecord {
                        text: i.text.clone(),
                        embedding: to_hex(&i.embedding.values),
                        sources: i.sources.clone(),
                    })
                    .collect(),
            })
            .collect(),
        edges: graph
            .edges
            .values()
            .map(|e| EdgeRecord {
                from: e.from,
                to: e.to,
                tasks: e
                    .tasks
                    .iter()
                    .map(|(t, qs)| EdgeTaskRecord { task_id: t.clone(), question_ids: qs.iter().cloned().collect() })
                    .collect(),
            })
            .collect(),
        questions: graph
            .questions
            .iter()
            .map(|(id, q)| QuestionRecord {
                question_id: id.clone(),
                task_id: q.task_id.clone(),
                text: q.text.clone(),
                embedding: to_hex(&q.embedding.values),
            })
            .collect(),
    };
    let mut out = BufWriter::new(fs::File::create(destination)?);
    serde_json::to_writer(&mut out, &file)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_graph(source: &Path) -> Result<InstructionGraph> {
    let raw = fs::read_to_string(source)?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| Error::MalformedFile(format!("{}: {e}", source.display())))?;
    let version = value
        .get("header")
        .and_then(|h| h.get("format_version"))
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::MalformedFile(format!("{}: missing header.format_version", source.display())))?;
    if version != GRAPH_FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version.to_owned(), expected: GRAPH_FORMAT_VERSION.into() });
    }
    let file: GraphFile =
        serde_json::from_value(value).map_err(|e| Error::MalformedFile(format!("{}: {e}", source.display())))?;
    from_file(file).map_err(|e| match e {
        Error::MalformedFile(m) => Error::MalformedFile(format!("{}: {m}", source.display())),
        other => other,
    })
}

fn from_file(file: GraphFile) -> Result<InstructionGraph> {
    let h = file.header;
    if h.scalar != "f32" {
        return Err(Error::MalformedFile(format!("unsupported embedding scalar {:?}", h.scalar)));
    }
    if !(0.0..=1.0).contains(&h.delta) {
        return Err(Error::MalformedFile(format!("delta {} outside [0, 1]", h.delta)));
    }
    h.embedder_config.validate().map_err(|e| Error::MalformedFile(e.to_string()))?;
    let dim = h.embedder_config.dimension;
    let decode = |hex: &str| -> Result<Embedding> { Ok(EmbeddingVector::from_values(from_hex::<f32>(hex, Some(dim))?)) };

    let mut nodes = BTreeMap::new();
    for n in file.nodes {
        if n.node_id == 0 || n.node_id >= h.ic {
            return Err(Error::MalformedFile(format!("node id {} outside [1, {})", n.node_id, h.ic)));
        }
        if n.instructions.is_empty() {
            return Err(Error::MalformedFile(format!("node {} holds no instructions", n.node_id)));
        }
        let mut texts = BTreeSet::new();
        let mut instructions = Vec::with_capacity(n.instructions.len());
        for i in n.instructions {
            if !texts.insert(i.text.clone()) {
                return Err(Error::MalformedFile(format!("node {} repeats instruction {:?}", n.node_id, i.text)));
            }
            instructions.push(Instruction { embedding: decode(&i.embedding)?, text: i.text, sources: i.sources });
        }
        if nodes.insert(n.node_id, NodeSet { id: n.node_id, instructions }).is_some() {
            return Err(Error::MalformedFile(format!("duplicate node id {}", n.node_id)));
        }
    }

    let mut edges = BTreeMap::new();
    for e in file.edges {
        if !nodes.contains_key(&e.from) || !nodes.contains_key(&e.to) {
            return Err(Error::MalformedFile(format!("edge ({}, {}) references a missing node", e.from, e.to)));
        }
        if e.tasks.is_empty() {
            return Err(Error::MalformedFile(format!("edge ({}, {}) carries no task", e.from, e.to)));
        }
        let tasks = e.tasks.into_iter().map(|t| (t.task_id, t.question_ids.into_iter().collect())).collect();
        if edges.insert((e.from, e.to), EdgeSet { from: e.from, to: e.to, tasks }).is_some() {
            return Err(Error::MalformedFile(format!("duplicate edge ({}, {})", e.from, e.to)));
        }
    }
    if h.tc != edges.len() as u64 + 1 {
        return Err(Error::MalformedFile(format!("edge counter {} disagrees with {} edges", h.tc, edges.len())));
    }

    let mut questions = BTreeMap::new();
    for q in file.questions {
        let entry = QuestionEntry { embedding: decode(&q.embedding)?, task_id: q.task_id, text: q.text };
        if questions.insert(q.question_id.clone(), entry).is_some() {
            return Err(Error::MalformedFile(format!("duplicate question id {}", q.question_id)));
        }
    }

    Ok(InstructionGraph::from_parts(h.delta, h.embedder_config, nodes, edges, questions, (h.ic, h.tc)))
}
