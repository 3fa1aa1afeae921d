use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Question;
use crate::error::{Error, Result};
use crate::graph::{QuestionId, TaskId};

/// One line of a training or evaluation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    pub task_id: TaskId,
    pub question_id: QuestionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub selected_path: Vec<String>,
    pub answer: String,
    pub truth: String,
    pub delta: f64,
    pub candidates: usize,
    pub episode_len: usize,
    pub backend_failed: bool,
}

pub fn write_records(records: &[QuestionRecord], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<QuestionRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::MalformedFile(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// What a run consumed and produced, enough to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Input file name → sha256 of its contents.
    pub inputs: std::collections::BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            inputs: Default::default(),
            outputs: Vec::new(),
        }
    }

    /// Records the hash of an input file.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        use sha2::{Digest, Sha256};
        let bytes = fs::read(path)?;
        self.inputs.insert(path.display().to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// The question kind as written in logs (`in_coverage`, ...).
pub(crate) fn kind_label(q: &Question) -> Option<String> {
    q.kind.and_then(|k| serde_json::to_value(k).ok()).and_then(|v| v.as_str().map(str::to_owned))
}
