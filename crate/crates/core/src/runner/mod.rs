//! Sequential execution of the model × domain × restriction grid.
//!
//! Timed requests never overlap: concurrent requests would compete for the
//! endpoint's accelerator and distort the timings being measured. Only the
//! GPU sampler runs alongside the single in-flight request.

mod gpu;
mod store;

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{word_count, Corpus, Domain};
use crate::endpoint::{apply_restriction, ChatClient, EndpointConfig, RawCompletion, Restriction};
use crate::jsonl::JsonlError;

pub use gpu::{sample_gpu_peak, GpuProbe, GpuWindow, MIN_INTERVAL_MS};
pub use store::{load_runs, RunStore};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run store: {0}")]
    Store(#[from] JsonlError),
    #[error("zero-length response for prompt `{0}`")]
    ZeroLengthResponse(String),
    #[error("GPU total must be > 0 MB")]
    NonPositiveTotal,
    #[error("no corpus for domain `{0}`")]
    MissingCorpus(String),
    #[error("run store {0} already has records; resume or choose a new path")]
    StoreNotEmpty(String),
}

/// One (model, domain, restriction) combination of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentCell {
    pub model_label: String,
    pub endpoint: EndpointConfig,
    pub domain: Domain,
    pub restriction: Restriction,
}

impl ExperimentCell {
    /// `model/domain/restriction`, e.g. `2B/medical/50` or `7B/common/none`.
    pub fn key(&self) -> String {
        cell_key(&self.model_label, &self.domain, &self.restriction)
    }
}

pub fn cell_key(model_label: &str, domain: &Domain, restriction: &Restriction) -> String {
    format!("{model_label}/{domain}/{}", restriction.key())
}

/// Splits a cell key into `(model, domain, restriction)`.
pub fn split_cell_key(key: &str) -> Option<(&str, &str, &str)> {
    let mut parts = key.splitn(3, '/');
    let model = parts.next()?;
    let domain = parts.next()?;
    let restriction = parts.next()?;
    Some((model, domain, restriction))
}

/// One timed inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell_key: String,
    pub prompt_id: String,
    pub prompt_word_len: usize,
    pub response_text: String,
    pub response_word_len: usize,
    pub inference_time_s: f64,
    pub gpu_mem_peak_mb: Option<u64>,
    pub gpu_mem_pct: Option<f64>,
    #[serde(with = "rfc3339")]
    pub started_at: DateTime<Utc>,
}

mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Micros, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

impl RunRecord {
    pub fn metrics(&self) -> Result<DerivedMetrics, RunnerError> {
        derive_metrics(self)
    }

    pub fn started_at_rfc3339(&self) -> String {
        self.started_at.to_rfc3339_opts(SecondsFormat::Micros, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMetrics {
    /// Response words per second.
    pub throughput_wps: f64,
    /// Seconds per response word.
    pub latency_spw: f64,
}

/// Throughput and per-word latency. Latency is defined as the per-record
/// reciprocal of throughput.
pub fn derive_metrics(rec: &RunRecord) -> Result<DerivedMetrics, RunnerError> {
    if rec.response_word_len == 0 {
        return Err(RunnerError::ZeroLengthResponse(rec.prompt_id.clone()));
    }
    let words = rec.response_word_len as f64;
    Ok(DerivedMetrics {
        throughput_wps: words / rec.inference_time_s,
        latency_spw: rec.inference_time_s / words,
    })
}

/// `100 * peak / total`, rounded to two decimals.
pub fn gpu_pct(peak_mb: u64, total_mb: u64) -> Result<f64, RunnerError> {
    if total_mb == 0 {
        return Err(RunnerError::NonPositiveTotal);
    }
    let pct = 100.0 * peak_mb as f64 / total_mb as f64;
    Ok((pct * 100.0).round() / 100.0)
}

/// Runs `request` and measures its wall time on a monotonic clock. On error
/// no timing is returned.
pub fn time_inference<E>(
    request: impl FnOnce() -> Result<RawCompletion, E>,
) -> Result<(RawCompletion, f64), E> {
    let start = Instant::now();
    let out = request()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    /// Skip `(cell_key, prompt_id)` pairs already in the store.
    pub resume: bool,
    /// Send one untimed request per cell before measuring.
    pub warmup: bool,
    /// Abort a cell after this many failures in a row.
    pub max_consecutive_failures: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            resume: false,
            warmup: true,
            max_consecutive_failures: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptFailure {
    pub cell_key: String,
    pub prompt_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridReport {
    pub cells_run: usize,
    pub records_appended: usize,
    pub skipped_existing: usize,
    pub failures: Vec<PromptFailure>,
    pub aborted_cells: Vec<String>,
}

impl GridReport {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty() && self.aborted_cells.is_empty()
    }
}

fn validate_cells(
    cells: &[ExperimentCell],
    corpus_per_domain: &BTreeMap<Domain, Corpus>,
) -> Result<(), RunnerError> {
    let mut seen = HashSet::new();
    for cell in cells {
        if cell.model_label.is_empty() || cell.model_label.contains('/') {
            return Err(RunnerError::Config(format!(
                "model label `{}` must be non-empty and contain no `/`",
                cell.model_label
            )));
        }
        if cell.domain.as_str().contains('/') {
            return Err(RunnerError::Config(format!(
                "domain `{}` must not contain `/`",
                cell.domain
            )));
        }
        if !seen.insert(cell.key()) {
            return Err(RunnerError::Config(format!(
                "duplicate cell `{}`",
                cell.key()
            )));
        }
        if !corpus_per_domain.contains_key(&cell.domain) {
            return Err(RunnerError::MissingCorpus(cell.domain.to_string()));
        }
    }
    Ok(())
}

/// Executes every cell in order, one prompt at a time, appending a record per
/// successful inference. Per-prompt failures are logged and skipped; a store
/// write failure aborts the whole grid.
pub fn run_grid(
    cells: &[ExperimentCell],
    corpus_per_domain: &BTreeMap<Domain, Corpus>,
    probe: Option<&GpuProbe>,
    store: &mut RunStore,
    opts: &GridOptions,
) -> Result<GridReport, RunnerError> {
    validate_cells(cells, corpus_per_domain)?;
    if let Some(p) = probe {
        p.validate()?;
    }
    if !opts.resume && !store.is_empty() {
        return Err(RunnerError::StoreNotEmpty(
            store.path().display().to_string(),
        ));
    }
    let mut report = GridReport::default();
    for cell in cells {
        let key = cell.key();
        let corpus = &corpus_per_domain[&cell.domain];
        let pending: Vec<_> = corpus
            .records()
            .iter()
            .filter(|p| !store.contains(&key, &p.id))
            .collect();
        report.skipped_existing += corpus.len() - pending.len();
        if pending.is_empty() {
            log::info!("{key}: nothing to do");
            continue;
        }
        report.cells_run += 1;

        let client = match ChatClient::new(cell.endpoint.clone()) {
            Ok(c) => c,
            Err(e) => {
                log::error!("{key}: {e}");
                report.aborted_cells.push(key);
                continue;
            }
        };

        if opts.warmup {
            let warm = apply_restriction(&pending[0].text, &cell.restriction)
                .and_then(|p| client.complete(&p));
            if let Err(e) = warm {
                log::warn!("{key}: warmup request failed: {e}");
            }
        }

        let mut consecutive = 0;
        log::info!("{key}: {} prompt(s)", pending.len());
        for prompt in pending {
            let result = apply_restriction(&prompt.text, &cell.restriction).and_then(|text| {
                // the store keeps microseconds
                let started_at = Utc::now().trunc_subsecs(6);
                let window = probe.map(GpuWindow::start);
                let timed = time_inference(|| client.complete(&text));
                let peak = window.and_then(GpuWindow::stop);
                timed.map(|t| (t, started_at, peak))
            });
            match result {
                Ok(((completion, secs), started_at, peak)) => {
                    consecutive = 0;
                    let gpu_mem_pct = match (peak, probe.and_then(|p| p.gpu_total_mb)) {
                        (Some(peak), Some(total)) => gpu_pct(peak, total).ok(),
                        _ => None,
                    };
                    let record = RunRecord {
                        cell_key: key.clone(),
                        prompt_id: prompt.id.clone(),
                        prompt_word_len: prompt.word_len(),
                        response_word_len: word_count(&completion.text),
                        response_text: completion.text,
                        inference_time_s: secs,
                        gpu_mem_peak_mb: peak,
                        gpu_mem_pct,
                        started_at,
                    };
                    store.append(record)?;
                    report.records_appended += 1;
                }
                Err(e) => {
                    log::warn!("{key}: prompt `{}` failed: {e}", prompt.id);
                    report.failures.push(PromptFailure {
                        cell_key: key.clone(),
                        prompt_id: prompt.id.clone(),
                        error: e.to_string(),
                    });
                    consecutive += 1;
                    if consecutive >= opts.max_consecutive_failures {
                        log::error!("{key}: {consecutive} consecutive failures, aborting cell");
                        report.aborted_cells.push(key.clone());
                        break;
                    }
                }
            }
        }
    }
    Ok(report)
}
