use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{InstructionPath, QuestionId, TaskId};

/// A recorded attempt at a question together with how well it did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedPath {
    pub instructions: Vec<String>,
    pub success_metric: f64,
}

/// Role a generated question plays in the synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Support,
    /// Query whose gold path is stored verbatim in the support set.
    InCoverage,
    /// Query whose gold path only exists as a recombination of support
    /// segments.
    Recombination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub task_id: TaskId,
    pub question_id: QuestionId,
    #[serde(rename = "question_text")]
    pub text: String,
    pub answer: String,
    pub paths: Vec<RecordedPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<QuestionKind>,
}

impl Question {
    /// Best recorded path whose success reaches `threshold` (first one on
    /// ties).
    pub fn gold_path(&self, threshold: f64) -> Option<InstructionPath> {
        let mut best: Option<&RecordedPath> = None;
        for p in self.paths.iter().filter(|p| p.success_metric >= threshold) {
            if best.is_none_or(|b| p.success_metric > b.success_metric) {
                best = Some(p);
            }
        }
        best.map(|p| InstructionPath {
            instructions: p.instructions.clone(),
            task_id: self.task_id.clone(),
            question_id: self.question_id.clone(),
            success_metric: p.success_metric,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub world_hash: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskQuestions {
    pub task_id: TaskId,
    pub questions: Vec<Question>,
}

/// Questions grouped by task. Task order is order of first appearance and,
/// together with question order inside a task, is the canonical processing
/// order everywhere.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskCorpus {
    pub tasks: Vec<TaskQuestions>,
    pub metadata: CorpusMeta,
}

impl TaskCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_questions(questions: impl IntoIterator<Item = Question>) -> Self {
        let mut corpus = Self::new();
        for q in questions {
            corpus.push(q);
        }
        corpus
    }

    pub fn push(&mut self, question: Question) {
        match self.tasks.iter_mut().find(|t| t.task_id == question.task_id) {
            Some(group) => group.questions.push(question),
            None => self.tasks.push(TaskQuestions { task_id: question.task_id.clone(), questions: vec![question] }),
        }
    }

    pub fn questions(&self) -> impl Iterator<Item = &Question> {
        self.tasks.iter().flat_map(|t| t.questions.iter())
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks.iter().map(|t| &t.task_id)
    }

    pub fn task(&self, id: &TaskId) -> &[Question] {
        self.tasks.iter().find(|t| &t.task_id == id).map_or(&[], |t| t.questions.as_slice())
    }

    pub fn len(&self) -> usize {
        self.tasks.iter().map(|t| t.questions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Questions satisfying `keep`, grouping preserved.
    pub fn filter(&self, mut keep: impl FnMut(&Question) -> bool) -> Self {
        let mut out = Self::from_questions(self.questions().filter(|q| keep(q)).cloned());
        out.metadata = self.metadata.clone();
        out
    }

    pub fn only_tasks(&self, tasks: &[TaskId]) -> Self {
        self.filter(|q| tasks.contains(&q.task_id))
    }

    pub fn without_tasks(&self, tasks: &[TaskId]) -> Self {
        self.filter(|q| !tasks.contains(&q.task_id))
    }

    pub fn of_kind(&self, kind: QuestionKind) -> Self {
        self.filter(|q| q.kind == Some(kind))
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &TaskCorpus) -> Self {
        let mut out = self.clone();
        for q in other.questions() {
            out.push(q.clone());
        }
        out
    }

    /// Checks id uniqueness and path well-formedness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for q in self.questions() {
            if !seen.insert(&q.question_id) {
                return Err(Error::Data(format!("duplicate question id {}", q.question_id)));
            }
            for (i, p) in q.paths.iter().enumerate() {
                let path = InstructionPath {
                    instructions: p.instructions.clone(),
                    task_id: q.task_id.clone(),
                    question_id: q.question_id.clone(),
                    success_metric: p.success_metric,
                };
                path.validate().map_err(|e| Error::Data(format!("path {i}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in self.questions() {
            out.push_str(&serde_json::to_string(q).expect("questions serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut corpus = Self::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let q: Question =
                serde_json::from_str(line).map_err(|e| Error::Data(format!("corpus line {}: {e}", n + 1)))?;
            corpus.push(q);
        }
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut text = String::new();
        for line in reader.lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_jsonl(&text).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(self.to_jsonl().as_bytes())?;
        out.flush()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSONL rendering.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}
