use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::corpus::word_count;
use crate::jsonl::{read_jsonl, JsonlAppender, JsonlError};

use super::{RunRecord, RunnerError};

/// Append-only JSONL file of [`RunRecord`]s, indexed by `(cell_key, prompt_id)`.
pub struct RunStore {
    path: PathBuf,
    records: Vec<RunRecord>,
    done: HashSet<(String, String)>,
    writer: Option<JsonlAppender>,
}

impl RunStore {
    /// Opens a store, loading any existing records. A missing file is an
    /// empty store; it is created on the first append.
    pub fn open(path: &Path) -> Result<Self, RunnerError> {
        let records = if path.exists() {
            load_runs(path)?
        } else {
            Vec::new()
        };
        let done = records
            .iter()
            .map(|r| (r.cell_key.clone(), r.prompt_id.clone()))
            .collect();
        Ok(RunStore {
            path: path.to_path_buf(),
            records,
            done,
            writer: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, cell_key: &str, prompt_id: &str) -> bool {
        self.done
            .contains(&(cell_key.to_string(), prompt_id.to_string()))
    }

    pub fn append(&mut self, record: RunRecord) -> Result<(), RunnerError> {
        if self.writer.is_none() {
            self.writer = Some(JsonlAppender::open(&self.path)?);
        }
        self.writer
            .as_mut()
            .expect("writer opened above")
            .append(&record)?;
        self.done
            .insert((record.cell_key.clone(), record.prompt_id.clone()));
        self.records.push(record);
        Ok(())
    }
}

/// Reads a run store, rechecking the per-record invariants.
pub fn load_runs(path: &Path) -> Result<Vec<RunRecord>, RunnerError> {
    let records: Vec<RunRecord> = read_jsonl(path)?;
    for (idx, r) in records.iter().enumerate() {
        let bad = |message: String| {
            RunnerError::Store(JsonlError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            })
        };
        if r.response_word_len != word_count(&r.response_text) {
            return Err(bad(format!(
                "response_word_len {} does not match response text ({} words)",
                r.response_word_len,
                word_count(&r.response_text)
            )));
        }
        if !(r.inference_time_s > 0.0 && r.inference_time_s.is_finite()) {
            return Err(bad("inference_time_s must be > 0".into()));
        }
    }
    Ok(records)
}
