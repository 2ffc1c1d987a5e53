//! Stage execution: run → score → analyze → report. Each stage persists its
//! artifacts so the pipeline can be resumed at any stage boundary.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use benchcut_core::analysis::{analyze_cells, CellAnalysis};
use benchcut_core::corpus::{
    filter_prompts, load_blocklist, load_prompts, Corpus, CorpusError, Domain, PromptFormat,
};
use benchcut_core::endpoint::{ChatClient, EmbeddingClient, EndpointError, Restriction};
use benchcut_core::jsonl::{read_jsonl, write_jsonl, JsonlAppender, JsonlError};
use benchcut_core::quality::{score_store, QualityScores};
use benchcut_core::report::{
    cell_file_stem, emit_scatter, render_outlier_table, render_summary_table, PlotSpec,
    ReportError, TableFormat,
};
use benchcut_core::runner::{
    load_runs, run_grid, ExperimentCell, GridOptions, RunStore, RunnerError,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cli::{
    AllPlan, AnalyzePlan, ConfigFile, CorpusSource, Plan, ReferenceSource, ReportPlan, RunPlan,
    ScorePlan,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FATAL: i32 = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    NoData(String),
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Result of one completed stage. Problems make it a partial success.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub problems: Vec<String>,
}

impl StageOutcome {
    fn new(stage: &'static str) -> Self {
        StageOutcome {
            stage,
            problems: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointLabel {
    pub label: String,
    pub model_name: String,
    pub base_url: String,
}

/// Everything needed to repeat a run. `config` is a valid `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub created_at: String,
    pub config_path: Option<PathBuf>,
    pub store_path: PathBuf,
    pub corpora: Vec<CorpusSource>,
    pub endpoints: Vec<EndpointLabel>,
    pub restrictions: Vec<String>,
    pub lambda_max: Option<f64>,
    pub lambda_min: Option<f64>,
    pub config: ConfigFile,
}

impl RunManifest {
    fn new(plan: &RunPlan) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config_path: plan.config_path.clone(),
            store_path: plan.store.clone(),
            corpora: plan.corpora.clone(),
            endpoints: plan
                .models
                .iter()
                .map(|m| EndpointLabel {
                    label: m.label.clone(),
                    model_name: m.endpoint.model_name.clone(),
                    base_url: m.endpoint.base_url.clone(),
                })
                .collect(),
            restrictions: plan.restrictions.clone(),
            lambda_max: plan.effective.lambda_max,
            lambda_min: plan.effective.lambda_min,
            config: plan.effective.clone(),
        }
    }
}

/// One line of `index.json` in an analysis directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub cell_key: String,
    pub file: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub prompt_id: String,
    pub reference: String,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| file_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| file_err(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| file_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| file_err(path, e))
}

fn load_corpora(sources: &[CorpusSource]) -> Result<Corpus, PipelineError> {
    let parts = sources
        .iter()
        .map(|s| {
            let c = load_prompts(&s.path, PromptFormat::from_path(&s.path))?;
            Ok(match &s.domain {
                Some(d) => c.with_domain(Domain::from(d.as_str())),
                None => c,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(Corpus::merge(parts)?)
}

pub fn run_stage(plan: &RunPlan) -> Result<StageOutcome, PipelineError> {
    let mut corpus = load_corpora(&plan.corpora)?;
    if let Some(path) = &plan.blocklist {
        let filtered = filter_prompts(&corpus, &load_blocklist(path)?);
        if filtered.removed > 0 {
            log::info!("blocklist removed {} prompt(s)", filtered.removed);
        }
        corpus = filtered.corpus;
    }
    if corpus.is_empty() {
        return Err(PipelineError::NoData("no prompts left to run".into()));
    }
    let per_domain = corpus.split_by_domain();
    let restrictions = plan
        .restrictions
        .iter()
        .map(|r| Restriction::parse(r))
        .collect::<Result<Vec<_>, _>>()?;

    let mut cells = Vec::new();
    for restriction in &restrictions {
        for model in &plan.models {
            for domain in per_domain.keys() {
                cells.push(ExperimentCell {
                    model_label: model.label.clone(),
                    endpoint: model.endpoint.clone(),
                    domain: domain.clone(),
                    restriction: restriction.clone(),
                });
            }
        }
    }

    let mut store = RunStore::open(&plan.store)?;
    write_json(&plan.manifest, &RunManifest::new(plan))?;
    let opts = GridOptions {
        resume: plan.resume,
        warmup: plan.warmup,
        ..GridOptions::default()
    };
    let report = run_grid(&cells, &per_domain, plan.gpu.as_ref(), &mut store, &opts)?;
    println!(
        "run: {} cell(s), {} record(s) appended, {} already present -> {}",
        report.cells_run,
        report.records_appended,
        report.skipped_existing,
        plan.store.display()
    );

    let mut out = StageOutcome::new("run");
    out.problems.extend(
        report
            .failures
            .iter()
            .map(|f| format!("{} {}: {}", f.cell_key, f.prompt_id, f.error)),
    );
    out.problems
        .extend(report.aborted_cells.iter().map(|c| format!("{c}: aborted")));
    Ok(out)
}

fn fetch_references(
    plan: &ScorePlan,
    cfg: &benchcut_core::endpoint::EndpointConfig,
    needed: &[&str],
    out: &mut StageOutcome,
) -> Result<HashMap<String, String>, PipelineError> {
    let mut refs: HashMap<String, String> = if plan.references_out.exists() {
        read_jsonl::<ReferenceRecord>(&plan.references_out)?
            .into_iter()
            .map(|r| (r.prompt_id, r.reference))
            .collect()
    } else {
        HashMap::new()
    };
    let corpus = load_corpora(&plan.prompts)?;
    let texts: HashMap<&str, &str> = corpus
        .records()
        .iter()
        .map(|r| (r.id.as_str(), r.text.as_str()))
        .collect();
    let client = ChatClient::new(cfg.clone())?;
    let mut appender: Option<JsonlAppender> = None;
    for &id in needed {
        if refs.contains_key(id) {
            continue;
        }
        let Some(text) = texts.get(id) else {
            out.problems
                .push(format!("{id}: no prompt text to fetch a reference"));
            continue;
        };
        match client.fetch_reference(text) {
            Ok(reference) => {
                let w = match appender.as_mut() {
                    Some(w) => w,
                    None => appender.insert(JsonlAppender::open(&plan.references_out)?),
                };
                w.append(&ReferenceRecord {
                    prompt_id: id.to_string(),
                    reference: reference.clone(),
                })?;
                refs.insert(id.to_string(), reference);
            }
            Err(e) => out.problems.push(format!("{id}: reference: {e}")),
        }
    }
    Ok(refs)
}

pub fn score_stage(plan: &ScorePlan) -> Result<StageOutcome, PipelineError> {
    let runs = load_runs(&plan.runs)?;
    if runs.is_empty() {
        return Err(PipelineError::NoData(format!(
            "{}: run store is empty",
            plan.runs.display()
        )));
    }
    let mut out = StageOutcome::new("score");
    let mut seen = HashSet::new();
    let needed: Vec<&str> = runs
        .iter()
        .map(|r| r.prompt_id.as_str())
        .filter(|id| seen.insert(*id))
        .collect();

    let references = match &plan.references {
        ReferenceSource::File(path) => read_jsonl::<ReferenceRecord>(path)?
            .into_iter()
            .map(|r| (r.prompt_id, r.reference))
            .collect(),
        ReferenceSource::Prompts => load_corpora(&plan.prompts)?
            .records()
            .iter()
            .filter_map(|r| r.reference.clone().map(|t| (r.id.clone(), t)))
            .collect(),
        ReferenceSource::Endpoint(cfg) => fetch_references(plan, cfg, &needed, &mut out)?,
    };

    let embedder = EmbeddingClient::new(plan.embed.clone())?;
    let outcome = score_store(&runs, &references, &embedder, plan.max_in_flight);
    write_jsonl(&plan.out, &outcome.scores)?;
    if outcome.skipped_no_reference > 0 {
        log::warn!(
            "{} run(s) have no reference and were not scored",
            outcome.skipped_no_reference
        );
    }
    println!(
        "score: {} scored, {} without reference, {} failed -> {}",
        outcome.scores.len(),
        outcome.skipped_no_reference,
        outcome.failures.len(),
        plan.out.display()
    );
    out.problems.extend(
        outcome
            .failures
            .iter()
            .map(|f| format!("{} {}: {}", f.cell_key, f.prompt_id, f.error)),
    );
    Ok(out)
}

pub fn analyze_stage(plan: &AnalyzePlan) -> Result<StageOutcome, PipelineError> {
    let runs = load_runs(&plan.runs)?;
    if runs.is_empty() {
        return Err(PipelineError::NoData(format!(
            "{}: run store is empty",
            plan.runs.display()
        )));
    }
    let scores: Vec<QualityScores> = match &plan.scores {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let cells = analyze_cells(&runs, &scores, &plan.options);

    let mut out = StageOutcome::new("analyze");
    let mut index = Vec::with_capacity(cells.len());
    for cell in &cells {
        let file = format!("{}.json", cell_file_stem(&cell.cell_key));
        write_json(&plan.out.join(&file), cell)?;
        if let Some(e) = &cell.error {
            out.problems.push(format!("{}: {e}", cell.cell_key));
        }
        index.push(IndexEntry {
            cell_key: cell.cell_key.clone(),
            file,
            error: cell.error.clone(),
        });
    }
    write_json(&plan.out.join("index.json"), &index)?;
    println!(
        "analyze: {} cell(s), {} with errors -> {}",
        cells.len(),
        out.problems.len(),
        plan.out.display()
    );
    Ok(out)
}

/// Loads the cells listed in an analysis directory's `index.json`.
pub fn load_analysis(dir: &Path) -> Result<Vec<CellAnalysis>, PipelineError> {
    let index: Vec<IndexEntry> = read_json(&dir.join("index.json"))?;
    index
        .iter()
        .map(|e| read_json(&dir.join(&e.file)))
        .collect()
}

pub fn report_stage(plan: &ReportPlan) -> Result<StageOutcome, PipelineError> {
    let cells = load_analysis(&plan.analysis)?;
    let summaries: Vec<_> = cells.iter().filter_map(|c| c.summary.clone()).collect();
    if summaries.is_empty() {
        return Err(PipelineError::NoData(
            "no cell has a summary to report".into(),
        ));
    }
    let outliers: Vec<_> = cells.iter().filter_map(|c| c.outliers.clone()).collect();
    let ext = match plan.format {
        TableFormat::Markdown => "md",
        TableFormat::Csv => "csv",
    };

    let mut out = StageOutcome::new("report");
    let summary_path = plan.out.join(format!("summary.{ext}"));
    write_text(
        &summary_path,
        &render_summary_table(&summaries, plan.format)?,
    )?;
    let outlier_path = plan.out.join(format!("outliers.{ext}"));
    if outliers.is_empty() {
        out.problems.push("no cell has an outlier analysis".into());
    } else {
        write_text(
            &outlier_path,
            &render_outlier_table(&outliers, plan.format)?,
        )?;
    }

    let mut plots = 0;
    if let Some(dir) = &plan.plots {
        for spec in cells.iter().filter_map(PlotSpec::from_analysis) {
            emit_scatter(&spec, dir)?;
            plots += 1;
        }
    }
    for c in &cells {
        if let Some(e) = &c.error {
            out.problems.push(format!("{}: {e}", c.cell_key));
        }
    }
    println!(
        "report: {} summary row(s), {} outlier row(s), {} plot(s) -> {}",
        summaries.len(),
        outliers.len(),
        plots,
        plan.out.display()
    );
    Ok(out)
}

fn finish(outcomes: &[StageOutcome], fatal: Option<(&str, PipelineError)>) -> i32 {
    let mut parts = Vec::new();
    for o in outcomes {
        for p in &o.problems {
            eprintln!("benchcut: {}: {p}", o.stage);
        }
        parts.push(if o.is_clean() {
            format!("{} ok", o.stage)
        } else {
            format!("{} partial ({} problem(s))", o.stage, o.problems.len())
        });
    }
    let code = if let Some((stage, e)) = fatal {
        eprintln!("benchcut: {stage}: {e}");
        parts.push(format!("{stage} failed"));
        EXIT_FATAL
    } else if outcomes.iter().all(StageOutcome::is_clean) {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    };
    if code != EXIT_OK {
        eprintln!("benchcut: {}", parts.join("; "));
    }
    code
}

fn run_all(plan: &AllPlan) -> i32 {
    let mut done = Vec::new();
    macro_rules! stage {
        ($name:expr, $call:expr) => {
            match $call {
                Ok(o) => done.push(o),
                Err(e) => return finish(&done, Some(($name, e))),
            }
        };
    }
    stage!("run", run_stage(&plan.run));
    if let Some(score) = &plan.score {
        stage!("score", score_stage(score));
    } else {
        log::info!("no --embed-endpoint; skipping score");
    }
    stage!("analyze", analyze_stage(&plan.analyze));
    stage!("report", report_stage(&plan.report));
    finish(&done, None)
}

/// Executes a plan and returns the process exit code: 0 success, 1 partial,
/// 2 fatal.
pub fn run_pipeline(plan: &Plan) -> i32 {
    let (name, result) = match plan {
        Plan::Run(p) => ("run", run_stage(p)),
        Plan::Score(p) => ("score", score_stage(p)),
        Plan::Analyze(p) => ("analyze", analyze_stage(p)),
        Plan::Report(p) => ("report", report_stage(p)),
        Plan::All(p) => return run_all(p),
    };
    match result {
        Ok(o) => finish(&[o], None),
        Err(e) => finish(&[], Some((name, e))),
    }
}
