//! Prompt corpora: loading, validation, blocklist filtering and domain tagging.
//!
//! Two on-disk formats are accepted. JSONL carries one object per line with
//! the keys `id`, `domain`, `text` and an optional `reference`. CSV uses the
//! same names as a mandatory header row (`id,domain,text,reference`), where an
//! empty `reference` cell means "no reference".

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate prompt id `{0}`")]
    DuplicateId(String),
}

/// Prompt domain. The four built-in domains are recognised case-insensitively;
/// anything else is kept verbatim as a custom domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Common,
    Cybersecurity,
    Medical,
    Finance,
    Custom(String),
}

impl Domain {
    pub fn as_str(&self) -> &str {
        match self {
            Domain::Common => "common",
            Domain::Cybersecurity => "cybersecurity",
            Domain::Medical => "medical",
            Domain::Finance => "finance",
            Domain::Custom(name) => name,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<&str> for Domain {
    fn from(s: &str) -> Self {
        let trimmed = s.trim();
        match trimmed.to_ascii_lowercase().as_str() {
            "common" => Domain::Common,
            "cybersecurity" => Domain::Cybersecurity,
            "medical" => Domain::Medical,
            "finance" => Domain::Finance,
            _ => Domain::Custom(trimmed.to_string()),
        }
    }
}

impl FromStr for Domain {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Domain::from(s))
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Domain::from(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub domain: Domain,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl PromptRecord {
    pub fn word_len(&self) -> usize {
        word_count(&self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptFormat {
    Jsonl,
    Csv,
}

impl PromptFormat {
    /// Guess the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => PromptFormat::Csv,
            _ => PromptFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<PromptRecord>,
    source_path: String,
    domain_counts: BTreeMap<Domain, usize>,
}

impl Corpus {
    /// Builds a corpus from already-validated records. Fails on duplicate ids
    /// or records whose text has no words.
    pub fn from_records(
        records: Vec<PromptRecord>,
        source_path: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            if !seen.insert(rec.id.as_str()) {
                return Err(CorpusError::DuplicateId(rec.id.clone()));
            }
        }
        let source_path = source_path.into();
        for (idx, rec) in records.iter().enumerate() {
            if word_count(&rec.text) == 0 {
                return Err(CorpusError::Parse {
                    path: PathBuf::from(&source_path),
                    line: idx + 1,
                    message: format!("prompt `{}` has empty text", rec.id),
                });
            }
        }
        Ok(Self::from_parts(records, source_path))
    }

    fn from_parts(records: Vec<PromptRecord>, source_path: String) -> Self {
        let mut domain_counts = BTreeMap::new();
        for rec in &records {
            *domain_counts.entry(rec.domain.clone()).or_insert(0) += 1;
        }
        Corpus {
            records,
            source_path,
            domain_counts,
        }
    }

    pub fn records(&self) -> &[PromptRecord] {
        &self.records
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn domain_counts(&self) -> &BTreeMap<Domain, usize> {
        &self.domain_counts
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Re-tags every record with `domain`.
    pub fn with_domain(self, domain: Domain) -> Self {
        let records = self
            .records
            .into_iter()
            .map(|mut r| {
                r.domain = domain.clone();
                r
            })
            .collect();
        Self::from_parts(records, self.source_path)
    }

    /// Splits the corpus into one corpus per domain, preserving record order.
    pub fn split_by_domain(&self) -> BTreeMap<Domain, Corpus> {
        let mut grouped: BTreeMap<Domain, Vec<PromptRecord>> = BTreeMap::new();
        for rec in &self.records {
            grouped
                .entry(rec.domain.clone())
                .or_default()
                .push(rec.clone());
        }
        grouped
            .into_iter()
            .map(|(d, recs)| (d, Self::from_parts(recs, self.source_path.clone())))
            .collect()
    }

    /// Concatenates corpora, keeping load order. Ids must stay unique.
    pub fn merge(parts: Vec<Corpus>) -> Result<Self, CorpusError> {
        let source = parts
            .iter()
            .map(|c| c.source_path.as_str())
            .collect::<Vec<_>>()
            .join(",");
        let records = parts.into_iter().flat_map(|c| c.records).collect();
        Self::from_records(records, source)
    }
}

/// Result of [`filter_prompts`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filtered {
    pub corpus: Corpus,
    pub removed: usize,
}

#[derive(Deserialize)]
struct RawRow {
    id: Option<String>,
    domain: Option<String>,
    text: Option<String>,
    #[serde(default)]
    reference: Option<String>,
}

impl RawRow {
    fn into_record(self, path: &Path, line: usize) -> Result<PromptRecord, CorpusError> {
        let missing = |field: &str| CorpusError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("missing required field `{field}`"),
        };
        let id = self
            .id
            .filter(|s| !s.is_empty())
            .ok_or_else(|| missing("id"))?;
        let domain = self
            .domain
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| missing("domain"))?;
        let text = self.text.ok_or_else(|| missing("text"))?;
        if word_count(&text) == 0 {
            return Err(CorpusError::Parse {
                path: path.to_path_buf(),
                line,
                message: "field `text` contains no words".into(),
            });
        }
        Ok(PromptRecord {
            id,
            domain: Domain::from(domain.as_str()),
            text,
            reference: self.reference.filter(|r| !r.is_empty()),
        })
    }
}

/// Loads a prompt corpus. Records keep file order; duplicate ids are rejected.
pub fn load_prompts(path: &Path, format: PromptFormat) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut records = Vec::new();
    match format {
        PromptFormat::Jsonl => {
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: RawRow = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
                records.push(row.into_record(path, idx + 1)?);
            }
        }
        PromptFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(true)
                .from_reader(file);
            let headers = reader.headers().map_err(|e| CorpusError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: e.to_string(),
            })?;
            for required in ["id", "domain", "text"] {
                if !headers.iter().any(|h| h == required) {
                    return Err(CorpusError::Parse {
                        path: path.to_path_buf(),
                        line: 1,
                        message: format!("header lacks column `{required}`"),
                    });
                }
            }
            for result in reader.deserialize::<RawRow>() {
                let line_of = |e: &csv::Error| e.position().map(|p| p.line() as usize).unwrap_or(0);
                let row = result.map_err(|e| CorpusError::Parse {
                    path: path.to_path_buf(),
                    line: line_of(&e),
                    message: e.to_string(),
                })?;
                // header is line 1, so the n-th data row sits on line n + 1
                let line = records.len() + 2;
                records.push(row.into_record(path, line)?);
            }
        }
    }
    Corpus::from_records(records, path.display().to_string())
}

/// Drops every record whose lowercased text contains one of the blocklist
/// substrings. Blocklist entries are lowercased before matching.
pub fn filter_prompts(corpus: &Corpus, blocklist: &[String]) -> Filtered {
    let needles: Vec<String> = blocklist
        .iter()
        .map(|b| b.to_lowercase())
        .filter(|b| !b.is_empty())
        .collect();
    if needles.is_empty() {
        return Filtered {
            corpus: corpus.clone(),
            removed: 0,
        };
    }
    let kept: Vec<PromptRecord> = corpus
        .records
        .iter()
        .filter(|r| {
            let lower = r.text.to_lowercase();
            !needles.iter().any(|n| lower.contains(n.as_str()))
        })
        .cloned()
        .collect();
    let removed = corpus.len() - kept.len();
    Filtered {
        corpus: Corpus::from_parts(kept, corpus.source_path.clone()),
        removed,
    }
}

/// Reads a blocklist file: one substring per line, blank lines and `#`
/// comments ignored.
pub fn load_blocklist(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

/// Number of maximal non-whitespace runs. Punctuation is not stripped.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
