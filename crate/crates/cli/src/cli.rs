//! Argument parsing and config-file merging. Precedence is flag > file > default.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use benchcut_core::analysis::{AnalysisOptions, CentralLine, IntervalSource};
use benchcut_core::endpoint::{EndpointConfig, Restriction, API_KEY_ENV, EMBED_API_KEY_ENV};
use benchcut_core::quality::DEFAULT_MAX_IN_FLIGHT;
use benchcut_core::report::TableFormat;
use benchcut_core::runner::GpuProbe;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Usage(String),
    #[error("config file {path}: {message}")]
    Config { path: PathBuf, message: String },
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn missing(flag: &str) -> CliError {
    usage(format!("missing required flag {flag}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "benchcut",
    version,
    about = "Benchmark OpenAI-compatible model endpoints and find slow outliers"
)]
struct Cli {
    /// JSON file with default values for any flag
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the benchmark grid and append records to a run store
    Run(RunCmd),
    /// Score responses against references (ROUGE-L, STS)
    Score(ScoreCmd),
    /// Summaries and outlier analysis per cell
    Analyze(AnalyzeCmd),
    /// Render tables and scatter plots from an analysis directory
    Report(ReportCmd),
    /// run, score, analyze and report into one working directory
    All(AllCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum IntervalArg {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentralArg {
    Centroid,
    LsOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Md,
    Csv,
}

#[derive(Debug, Args)]
struct RunCore {
    /// Prompt file (.jsonl or .csv); repeatable
    #[arg(long = "prompts", value_name = "FILE")]
    prompts: Vec<PathBuf>,
    /// Domain for the prompts file at the same position; repeatable
    #[arg(long = "domain", value_name = "NAME")]
    domains: Vec<String>,
    /// File of blocked phrases, one per line
    #[arg(long, value_name = "FILE")]
    blocklist: Option<PathBuf>,
    /// Base URL; give one shared or one per --model
    #[arg(long = "endpoint", value_name = "URL")]
    endpoints: Vec<String>,
    /// Model as LABEL=NAME (or just NAME); repeatable
    #[arg(long = "model", value_name = "LABEL=NAME")]
    models: Vec<String>,
    /// Word target or `none`; repeatable [default: 50 and none]
    #[arg(long = "restriction", value_name = "50|none")]
    restrictions: Vec<String>,
    /// Shell command printing GPU memory in use (MB)
    #[arg(long, value_name = "CMD")]
    gpu_probe: Option<String>,
    /// Total GPU memory, for the percentage column
    #[arg(long, value_name = "MB")]
    gpu_total_mb: Option<u64>,
    #[arg(long, value_name = "MS")]
    gpu_interval_ms: Option<u64>,
    /// Send one untimed request per cell first (default)
    #[arg(long, overrides_with = "no_warmup")]
    warmup: bool,
    #[arg(long, overrides_with = "warmup")]
    no_warmup: bool,
    /// Continue an existing run store, skipping finished prompts
    #[arg(long)]
    resume: bool,
    #[arg(long, value_name = "SECONDS")]
    timeout_s: Option<f64>,
    #[arg(long, value_name = "N")]
    max_retries: Option<u32>,
    #[arg(long, value_name = "N")]
    max_tokens: Option<u32>,
}

#[derive(Debug, Args)]
struct ScoreCore {
    /// JSONL of {"prompt_id", "reference"}
    #[arg(long, value_name = "FILE")]
    references: Option<PathBuf>,
    /// Fetch references from this endpoint instead
    #[arg(long, value_name = "URL")]
    reference_endpoint: Option<String>,
    #[arg(long, value_name = "NAME")]
    reference_model: Option<String>,
    #[arg(long, value_name = "URL")]
    embed_endpoint: Option<String>,
    #[arg(long, value_name = "NAME")]
    embed_model: Option<String>,
    /// Concurrent embedding requests
    #[arg(long, value_name = "N")]
    max_in_flight: Option<usize>,
}

#[derive(Debug, Args)]
struct AnalyzeCore {
    #[arg(long, value_name = "F")]
    lambda_max: Option<f64>,
    #[arg(long, value_name = "F")]
    lambda_min: Option<f64>,
    /// Which axis sets the angular step
    #[arg(long, value_enum)]
    interval_source: Option<IntervalArg>,
    /// How the central line is fitted
    #[arg(long, value_enum)]
    central: Option<CentralArg>,
}

#[derive(Debug, Args)]
struct ReportCore {
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct RunCmd {
    #[command(flatten)]
    core: RunCore,
    /// Run store (JSONL) [default: runs.jsonl]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreCmd {
    #[command(flatten)]
    core: ScoreCore,
    #[arg(long, value_name = "FILE")]
    runs: Option<PathBuf>,
    /// Prompt files, for reference fetching or their `reference` fields
    #[arg(long = "prompts", value_name = "FILE")]
    prompts: Vec<PathBuf>,
    /// Scores file (JSONL) [default: scores.jsonl]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeCmd {
    #[command(flatten)]
    core: AnalyzeCore,
    #[arg(long, value_name = "FILE")]
    runs: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    scores: Option<PathBuf>,
    /// Output directory [default: analysis]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportCmd {
    #[command(flatten)]
    core: ReportCore,
    #[arg(long, value_name = "DIR")]
    analysis: Option<PathBuf>,
    /// Write scatter plots (SVG + CSV) here
    #[arg(long, value_name = "DIR")]
    plots: Option<PathBuf>,
    /// Table directory [default: the analysis directory]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AllCmd {
    #[command(flatten)]
    run: RunCore,
    #[command(flatten)]
    score: ScoreCore,
    #[command(flatten)]
    analyze: AnalyzeCore,
    #[command(flatten)]
    report: ReportCore,
    #[arg(long, value_name = "DIR")]
    workdir: Option<PathBuf>,
}

/// Config file schema. Keys mirror the long flags; artifact paths use one key
/// per artifact (`runs`, `scores`, `analysis`, `report_dir`, `plots`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub prompts: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub domains: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocklist: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub endpoints: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub restrictions: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gpu_probe: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gpu_total_mb: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gpu_interval_ms: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub references: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval_source: Option<IntervalArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub central: Option<CentralArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<FormatArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plots: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let err = |message: String| CliError::Config {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}

/// A prompt file with its optional domain override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSource {
    pub path: PathBuf,
    pub domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub label: String,
    pub endpoint: EndpointConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub corpora: Vec<CorpusSource>,
    pub blocklist: Option<PathBuf>,
    pub models: Vec<ModelSpec>,
    /// Restriction tokens, already validated.
    pub restrictions: Vec<String>,
    pub store: PathBuf,
    pub manifest: PathBuf,
    pub gpu: Option<GpuProbe>,
    pub warmup: bool,
    pub resume: bool,
    /// The merged settings, recorded in the manifest.
    pub effective: ConfigFile,
    pub config_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSource {
    File(PathBuf),
    /// `reference` fields of the prompt records.
    Prompts,
    Endpoint(EndpointConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorePlan {
    pub runs: PathBuf,
    pub prompts: Vec<CorpusSource>,
    pub references: ReferenceSource,
    /// Where fetched references are cached.
    pub references_out: PathBuf,
    pub embed: EndpointConfig,
    pub max_in_flight: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzePlan {
    pub runs: PathBuf,
    pub scores: Option<PathBuf>,
    pub options: AnalysisOptions,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPlan {
    pub analysis: PathBuf,
    pub format: TableFormat,
    pub plots: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllPlan {
    pub workdir: PathBuf,
    pub run: RunPlan,
    /// `None` when no embedding endpoint is configured.
    pub score: Option<ScorePlan>,
    pub analyze: AnalyzePlan,
    pub report: ReportPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Run(Box<RunPlan>),
    Score(Box<ScorePlan>),
    Analyze(AnalyzePlan),
    Report(ReportPlan),
    All(Box<AllPlan>),
}

fn vec_or<T: Clone>(flag: Vec<T>, file: &[T]) -> Vec<T> {
    if flag.is_empty() {
        file.to_vec()
    } else {
        flag
    }
}

fn opt_or<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

fn flag_or(flag: bool, file: Option<bool>) -> bool {
    flag || file.unwrap_or(false)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.join(name),
        _ => PathBuf::from(name),
    }
}

fn parse_model(spec: &str, base_url: &str, core: &Merged) -> Result<ModelSpec, CliError> {
    let (label, name) = match spec.split_once('=') {
        Some((l, n)) => (l.trim(), n.trim()),
        None => (spec.rsplit('/').next().unwrap_or(spec), spec),
    };
    if label.is_empty() || name.is_empty() || label.contains('/') {
        return Err(usage(format!(
            "--model `{spec}`: expected LABEL=NAME with a non-empty label without `/`"
        )));
    }
    let mut endpoint = EndpointConfig::new(base_url, name).with_env_key(&[API_KEY_ENV]);
    if let Some(t) = core.timeout_s {
        endpoint.timeout_s = t;
    }
    if let Some(r) = core.max_retries {
        endpoint.max_retries = r;
    }
    endpoint.max_tokens = core.max_tokens;
    endpoint
        .validate()
        .map_err(|e| usage(format!("--endpoint for `{label}`: {e}")))?;
    Ok(ModelSpec {
        label: label.to_string(),
        endpoint,
    })
}

/// Run settings after merging flags over the file.
struct Merged {
    prompts: Vec<PathBuf>,
    domains: Vec<String>,
    blocklist: Option<PathBuf>,
    endpoints: Vec<String>,
    models: Vec<String>,
    restrictions: Vec<String>,
    gpu_probe: Option<String>,
    gpu_total_mb: Option<u64>,
    gpu_interval_ms: Option<u64>,
    warmup: bool,
    resume: bool,
    timeout_s: Option<f64>,
    max_retries: Option<u32>,
    max_tokens: Option<u32>,
}

fn merge_run(core: RunCore, file: &ConfigFile) -> Merged {
    let warmup = if core.no_warmup {
        Some(false)
    } else if core.warmup {
        Some(true)
    } else {
        None
    };
    Merged {
        prompts: vec_or(core.prompts, &file.prompts),
        domains: vec_or(core.domains, &file.domains),
        blocklist: opt_or(core.blocklist, &file.blocklist),
        endpoints: vec_or(core.endpoints, &file.endpoints),
        models: vec_or(core.models, &file.models),
        restrictions: vec_or(core.restrictions, &file.restrictions),
        gpu_probe: opt_or(core.gpu_probe, &file.gpu_probe),
        gpu_total_mb: opt_or(core.gpu_total_mb, &file.gpu_total_mb),
        gpu_interval_ms: opt_or(core.gpu_interval_ms, &file.gpu_interval_ms),
        warmup: warmup.or(file.warmup).unwrap_or(true),
        resume: flag_or(core.resume, file.resume),
        timeout_s: opt_or(core.timeout_s, &file.timeout_s),
        max_retries: opt_or(core.max_retries, &file.max_retries),
        max_tokens: opt_or(core.max_tokens, &file.max_tokens),
    }
}

fn corpus_sources(prompts: &[PathBuf], domains: &[String]) -> Result<Vec<CorpusSource>, CliError> {
    if !domains.is_empty() && domains.len() != prompts.len() {
        return Err(usage(format!(
            "--domain given {} time(s) for {} --prompts file(s); pair them one to one",
            domains.len(),
            prompts.len()
        )));
    }
    Ok(prompts
        .iter()
        .enumerate()
        .map(|(i, p)| CorpusSource {
            path: p.clone(),
            domain: domains.get(i).cloned(),
        })
        .collect())
}

fn build_run(
    m: Merged,
    store: PathBuf,
    manifest: PathBuf,
    config_path: Option<PathBuf>,
) -> Result<RunPlan, CliError> {
    if m.prompts.is_empty() {
        return Err(missing("--prompts"));
    }
    if m.models.is_empty() {
        return Err(missing("--model"));
    }
    if m.endpoints.is_empty() {
        return Err(missing("--endpoint"));
    }
    if m.endpoints.len() != 1 && m.endpoints.len() != m.models.len() {
        return Err(usage(format!(
            "--endpoint given {} time(s) for {} --model(s); give one shared or one per model",
            m.endpoints.len(),
            m.models.len()
        )));
    }
    let corpora = corpus_sources(&m.prompts, &m.domains)?;
    let models = m
        .models
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let url = &m.endpoints[if m.endpoints.len() == 1 { 0 } else { i }];
            parse_model(spec, url, &m)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut restrictions: Vec<String> = Vec::new();
    let raw = if m.restrictions.is_empty() {
        vec!["50".to_string(), "none".to_string()]
    } else {
        m.restrictions.clone()
    };
    for r in &raw {
        let key = Restriction::parse(r)
            .map_err(|e| usage(format!("--restriction `{r}`: {e}")))?
            .key();
        if !restrictions.contains(&key) {
            restrictions.push(key);
        }
    }

    let gpu = match (&m.gpu_probe, m.gpu_total_mb) {
        (None, Some(_)) => return Err(usage("--gpu-total-mb requires --gpu-probe")),
        (None, None) => None,
        (Some(cmd), total) => {
            let mut p = GpuProbe::new(cmd.clone());
            p.gpu_total_mb = total;
            if let Some(ms) = m.gpu_interval_ms {
                p.interval_ms = ms;
            }
            p.validate()
                .map_err(|e| usage(format!("--gpu-probe: {e}")))?;
            Some(p)
        }
    };

    let effective = ConfigFile {
        prompts: m.prompts.clone(),
        domains: m.domains.clone(),
        blocklist: m.blocklist.clone(),
        endpoints: m.endpoints.clone(),
        models: m.models.clone(),
        restrictions: restrictions.clone(),
        runs: Some(store.clone()),
        gpu_probe: m.gpu_probe.clone(),
        gpu_total_mb: m.gpu_total_mb,
        gpu_interval_ms: gpu.as_ref().map(|g| g.interval_ms),
        warmup: Some(m.warmup),
        timeout_s: Some(models[0].endpoint.timeout_s),
        max_retries: Some(models[0].endpoint.max_retries),
        max_tokens: m.max_tokens,
        ..ConfigFile::default()
    };
    Ok(RunPlan {
        corpora,
        blocklist: m.blocklist,
        models,
        restrictions,
        store,
        manifest,
        gpu,
        warmup: m.warmup,
        resume: m.resume,
        effective,
        config_path,
    })
}

fn build_score(
    core: ScoreCore,
    file: &ConfigFile,
    runs: PathBuf,
    prompts: Vec<CorpusSource>,
    out: PathBuf,
) -> Result<ScorePlan, CliError> {
    let embed_url = opt_or(core.embed_endpoint, &file.embed_endpoint)
        .ok_or_else(|| missing("--embed-endpoint"))?;
    let embed_model =
        opt_or(core.embed_model, &file.embed_model).unwrap_or_else(|| "embedding".into());
    let embed =
        EndpointConfig::new(embed_url, embed_model).with_env_key(&[EMBED_API_KEY_ENV, API_KEY_ENV]);
    embed
        .validate()
        .map_err(|e| usage(format!("--embed-endpoint: {e}")))?;

    let references = if let Some(p) = opt_or(core.references, &file.references) {
        ReferenceSource::File(p)
    } else if let Some(url) = opt_or(core.reference_endpoint, &file.reference_endpoint) {
        let model = opt_or(core.reference_model, &file.reference_model)
            .ok_or_else(|| missing("--reference-model (with --reference-endpoint)"))?;
        if prompts.is_empty() {
            return Err(missing("--prompts (prompt texts for --reference-endpoint)"));
        }
        let cfg = EndpointConfig::new(url, model).with_env_key(&[API_KEY_ENV]);
        cfg.validate()
            .map_err(|e| usage(format!("--reference-endpoint: {e}")))?;
        ReferenceSource::Endpoint(cfg)
    } else if !prompts.is_empty() {
        ReferenceSource::Prompts
    } else {
        return Err(usage(
            "score needs --references, --reference-endpoint or --prompts with reference fields",
        ));
    };
    let max_in_flight =
        opt_or(core.max_in_flight, &file.max_in_flight).unwrap_or(DEFAULT_MAX_IN_FLIGHT);
    if max_in_flight == 0 {
        return Err(usage("--max-in-flight must be at least 1"));
    }
    Ok(ScorePlan {
        references_out: sibling(&out, "references.jsonl"),
        runs,
        prompts,
        references,
        embed,
        max_in_flight,
        out,
    })
}

fn build_analysis_options(
    core: AnalyzeCore,
    file: &ConfigFile,
) -> Result<AnalysisOptions, CliError> {
    let lambda_max = opt_or(core.lambda_max, &file.lambda_max);
    let lambda_min = opt_or(core.lambda_min, &file.lambda_min);
    for (flag, v) in [("--lambda-max", lambda_max), ("--lambda-min", lambda_min)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(usage(format!("{flag} must be a positive number, got {v}")));
            }
        }
    }
    Ok(AnalysisOptions {
        lambda_max,
        lambda_min,
        interval_source: match opt_or(core.interval_source, &file.interval_source) {
            Some(IntervalArg::Y) => IntervalSource::YValues,
            _ => IntervalSource::XValues,
        },
        central: match opt_or(core.central, &file.central) {
            Some(CentralArg::LsOrigin) => CentralLine::LeastSquaresOrigin,
            _ => CentralLine::Centroid,
        },
    })
}

fn table_format(core: ReportCore, file: &ConfigFile) -> TableFormat {
    match opt_or(core.format, &file.format) {
        Some(FormatArg::Csv) => TableFormat::Csv,
        _ => TableFormat::Markdown,
    }
}

/// Parses `argv` (program name first) into a validated plan.
pub fn parse_cli<I, T>(argv: I) -> Result<Plan, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Run(cmd) => {
            let store = opt_or(cmd.out, &file.runs).unwrap_or_else(|| "runs.jsonl".into());
            let manifest = sibling(&store, "manifest.json");
            let merged = merge_run(cmd.core, &file);
            build_run(merged, store, manifest, cli.config).map(|p| Plan::Run(Box::new(p)))
        }
        Command::Score(cmd) => {
            let runs = opt_or(cmd.runs, &file.runs).ok_or_else(|| missing("--runs"))?;
            // only ids and texts matter here, so domains are not paired
            let prompts = corpus_sources(&vec_or(cmd.prompts, &file.prompts), &[])?;
            let out = opt_or(cmd.out, &file.scores).unwrap_or_else(|| "scores.jsonl".into());
            build_score(cmd.core, &file, runs, prompts, out).map(|p| Plan::Score(Box::new(p)))
        }
        Command::Analyze(cmd) => {
            let runs = opt_or(cmd.runs, &file.runs).ok_or_else(|| missing("--runs"))?;
            Ok(Plan::Analyze(AnalyzePlan {
                runs,
                scores: opt_or(cmd.scores, &file.scores),
                options: build_analysis_options(cmd.core, &file)?,
                out: opt_or(cmd.out, &file.analysis).unwrap_or_else(|| "analysis".into()),
            }))
        }
        Command::Report(cmd) => {
            let analysis =
                opt_or(cmd.analysis, &file.analysis).ok_or_else(|| missing("--analysis"))?;
            Ok(Plan::Report(ReportPlan {
                format: table_format(cmd.core, &file),
                plots: opt_or(cmd.plots, &file.plots),
                out: opt_or(cmd.out, &file.report_dir).unwrap_or_else(|| analysis.clone()),
                analysis,
            }))
        }
        Command::All(cmd) => {
            let workdir = opt_or(cmd.workdir, &file.workdir).ok_or_else(|| missing("--workdir"))?;
            let merged = merge_run(cmd.run, &file);
            let prompts = corpus_sources(&merged.prompts, &merged.domains)?;
            let run = build_run(
                merged,
                workdir.join("runs.jsonl"),
                workdir.join("manifest.json"),
                cli.config,
            )?;
            let wants_score = cmd.score.embed_endpoint.is_some() || file.embed_endpoint.is_some();
            let score = if wants_score {
                Some(build_score(
                    cmd.score,
                    &file,
                    run.store.clone(),
                    prompts,
                    workdir.join("scores.jsonl"),
                )?)
            } else {
                None
            };
            let options = build_analysis_options(cmd.analyze, &file)?;
            let mut run = run;
            run.effective.lambda_max = options.lambda_max;
            run.effective.lambda_min = options.lambda_min;
            run.effective.interval_source = Some(match options.interval_source {
                IntervalSource::XValues => IntervalArg::X,
                IntervalSource::YValues => IntervalArg::Y,
            });
            run.effective.central = Some(match options.central {
                CentralLine::Centroid => CentralArg::Centroid,
                CentralLine::LeastSquaresOrigin => CentralArg::LsOrigin,
            });
            if let Some(s) = &score {
                run.effective.embed_endpoint = Some(s.embed.base_url.clone());
                run.effective.embed_model = Some(s.embed.model_name.clone());
                match &s.references {
                    ReferenceSource::File(p) => run.effective.references = Some(p.clone()),
                    ReferenceSource::Endpoint(c) => {
                        run.effective.reference_endpoint = Some(c.base_url.clone());
                        run.effective.reference_model = Some(c.model_name.clone());
                    }
                    ReferenceSource::Prompts => {}
                }
            }
            let format = table_format(cmd.report, &file);
            run.effective.format = Some(match format {
                TableFormat::Markdown => FormatArg::Md,
                TableFormat::Csv => FormatArg::Csv,
            });
            run.effective.workdir = Some(workdir.clone());
            run.effective.runs = None;
            let analysis_dir = workdir.join("analysis");
            Ok(Plan::All(Box::new(AllPlan {
                analyze: AnalyzePlan {
                    runs: run.store.clone(),
                    scores: score.as_ref().map(|s| s.out.clone()),
                    options,
                    out: analysis_dir.clone(),
                },
                report: ReportPlan {
                    analysis: analysis_dir,
                    format,
                    plots: Some(workdir.join("plots")),
                    out: workdir.join("report"),
                },
                score,
                run,
                workdir,
            })))
        }
    }
}
