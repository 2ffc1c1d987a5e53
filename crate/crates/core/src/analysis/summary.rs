//! Per-cell aggregation rows: the overall summary and the outlier subgroup.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::stats::{mean_std, MeanStd};
use super::throughcut::ThroughCutResult;
use super::AnalysisError;
use crate::quality::QualityScores;
use crate::runner::RunRecord;

type Stat = MeanStd<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpuUsage {
    /// Highest per-record peak in the cell.
    pub peak_mb: u64,
    pub pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell_key: String,
    pub throughput: Stat,
    pub latency: Stat,
    pub gpu_mem_peak_mb: Option<GpuUsage>,
    pub response_len: Stat,
    pub rouge_l: Option<Stat>,
    pub sts: Option<Stat>,
    /// Candidate length over reference length, shown next to the quality
    /// scores since both metrics drift when lengths differ a lot.
    pub length_ratio: Option<Stat>,
    pub inference_time: Stat,
    pub prompt_len: Stat,
    /// Runs in the cell.
    pub n: usize,
    /// Runs with an empty response, excluded from throughput, latency and
    /// response length.
    pub n_zero_word: usize,
    pub n_scored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Below,
    Above,
    Equal,
}

impl Direction {
    pub fn compare(subgroup: f64, overall: f64) -> Self {
        if subgroup < overall {
            Direction::Below
        } else if subgroup > overall {
            Direction::Above
        } else {
            Direction::Equal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgroupStat {
    pub mean: f64,
    pub std: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSummaryRow {
    pub cell_key: String,
    pub r: f64,
    pub m_max: f64,
    pub m_central: f64,
    pub m_min: f64,
    pub theta_max: f64,
    pub theta_central: f64,
    pub theta_min: f64,
    pub n_outliers: usize,
    pub inference_time: Option<SubgroupStat>,
    pub response_len: Option<SubgroupStat>,
    pub prompt_len: Option<SubgroupStat>,
    pub latency: Option<SubgroupStat>,
    pub throughput: Option<SubgroupStat>,
    pub rouge_l: Option<SubgroupStat>,
    pub sts: Option<SubgroupStat>,
}

fn check_cell<'a>(
    cell_key: &str,
    keys: impl Iterator<Item = &'a str>,
) -> Result<(), AnalysisError> {
    for k in keys {
        if k != cell_key {
            return Err(AnalysisError::CellMismatch {
                expected: cell_key.to_string(),
                found: k.to_string(),
            });
        }
    }
    Ok(())
}

/// Sorted before aggregation so permuted inputs give bit-identical rows.
fn stat(mut values: Vec<f64>) -> Result<Stat, AnalysisError> {
    values.sort_by(f64::total_cmp);
    mean_std(&values)
}

fn optional_stat(values: Vec<f64>) -> Option<Stat> {
    stat(values).ok()
}

/// Aggregates one cell. Throughput, latency and response length use only
/// runs with a non-empty response; quality uses the cell's scores.
pub fn summarize_cell(
    runs: &[RunRecord],
    scores: &[QualityScores],
) -> Result<SummaryRow, AnalysisError> {
    let first = runs.first().ok_or(AnalysisError::Empty)?;
    let cell_key = first.cell_key.clone();
    check_cell(&cell_key, runs.iter().map(|r| r.cell_key.as_str()))?;
    check_cell(&cell_key, scores.iter().map(|s| s.cell_key.as_str()))?;

    let usable: Vec<_> = runs
        .iter()
        .filter_map(|r| r.metrics().ok().map(|m| (r, m)))
        .collect();
    if usable.is_empty() {
        return Err(AnalysisError::EmptyCell(cell_key));
    }
    let throughput: Vec<f64> = usable.iter().map(|(_, m)| m.throughput_wps).collect();
    let latency: Vec<f64> = usable.iter().map(|(_, m)| m.latency_spw).collect();
    let response_len: Vec<f64> = usable
        .iter()
        .map(|(r, _)| r.response_word_len as f64)
        .collect();
    let times: Vec<f64> = runs.iter().map(|r| r.inference_time_s).collect();
    let prompt_len: Vec<f64> = runs.iter().map(|r| r.prompt_word_len as f64).collect();

    // on equal peaks keep the reading that carries a percentage
    let gpu_mem_peak_mb = runs
        .iter()
        .filter_map(|r| r.gpu_mem_peak_mb.map(|mb| (mb, r.gpu_mem_pct)))
        .fold(None, |best: Option<(u64, Option<f64>)>, cur| match best {
            Some(b) if b.0 > cur.0 || (b.0 == cur.0 && b.1.is_some()) => Some(b),
            _ => Some(cur),
        })
        .map(|(peak_mb, pct)| GpuUsage { peak_mb, pct });

    let by_prompt: HashMap<&str, &RunRecord> =
        runs.iter().map(|r| (r.prompt_id.as_str(), r)).collect();
    let rouge: Vec<f64> = scores.iter().map(|s| s.rouge_l).collect();
    let sts: Vec<f64> = scores.iter().map(|s| s.sts).collect();
    let ratio: Vec<f64> = scores
        .iter()
        .filter(|s| s.reference_word_len > 0)
        .filter_map(|s| {
            by_prompt
                .get(s.prompt_id.as_str())
                .map(|r| r.response_word_len as f64 / s.reference_word_len as f64)
        })
        .collect();

    Ok(SummaryRow {
        cell_key,
        throughput: stat(throughput)?,
        latency: stat(latency)?,
        gpu_mem_peak_mb,
        response_len: stat(response_len)?,
        rouge_l: optional_stat(rouge),
        sts: optional_stat(sts),
        length_ratio: optional_stat(ratio),
        inference_time: stat(times)?,
        prompt_len: stat(prompt_len)?,
        n: runs.len(),
        n_zero_word: runs.len() - usable.len(),
        n_scored: scores.len(),
    })
}

fn subgroup(values: Vec<f64>, overall: Option<&Stat>) -> Option<SubgroupStat> {
    let overall = overall?;
    let s = stat(values).ok()?;
    Some(SubgroupStat {
        mean: s.mean,
        std: s.std,
        direction: Direction::compare(s.mean, overall.mean),
    })
}

/// Characterizes the flagged points of a cell against the cell's overall row.
pub fn summarize_outliers(
    runs: &[RunRecord],
    scores: &[QualityScores],
    tc: &ThroughCutResult<f64>,
    overall: &SummaryRow,
) -> Result<OutlierSummaryRow, AnalysisError> {
    if tc.cell_key != overall.cell_key {
        return Err(AnalysisError::CellMismatch {
            expected: overall.cell_key.clone(),
            found: tc.cell_key.clone(),
        });
    }
    check_cell(&overall.cell_key, runs.iter().map(|r| r.cell_key.as_str()))?;
    check_cell(
        &overall.cell_key,
        scores.iter().map(|s| s.cell_key.as_str()),
    )?;

    let flagged: HashSet<&str> = tc.outlier_ids.iter().map(String::as_str).collect();
    let known: HashSet<&str> = runs.iter().map(|r| r.prompt_id.as_str()).collect();
    if let Some(missing) = flagged.iter().find(|id| !known.contains(*id)) {
        return Err(AnalysisError::CellMismatch {
            expected: overall.cell_key.clone(),
            found: format!("outlier `{missing}` not among the cell's runs"),
        });
    }

    let out_runs: Vec<&RunRecord> = runs
        .iter()
        .filter(|r| flagged.contains(r.prompt_id.as_str()))
        .collect();
    let metrics: Vec<_> = out_runs.iter().filter_map(|r| r.metrics().ok()).collect();
    let out_scores: Vec<&QualityScores> = scores
        .iter()
        .filter(|s| flagged.contains(s.prompt_id.as_str()))
        .collect();

    let col = |f: &dyn Fn(&RunRecord) -> f64| out_runs.iter().map(|r| f(r)).collect::<Vec<_>>();
    let times = col(&|r| r.inference_time_s);
    let response_len = col(&|r| r.response_word_len as f64);
    let prompt_len = col(&|r| r.prompt_word_len as f64);
    let latency: Vec<f64> = metrics.iter().map(|m| m.latency_spw).collect();
    let throughput: Vec<f64> = metrics.iter().map(|m| m.throughput_wps).collect();
    let rouge: Vec<f64> = out_scores.iter().map(|s| s.rouge_l).collect();
    let sts: Vec<f64> = out_scores.iter().map(|s| s.sts).collect();

    Ok(OutlierSummaryRow {
        cell_key: overall.cell_key.clone(),
        r: tc.r,
        m_max: tc.m_max,
        m_central: tc.m_central,
        m_min: tc.m_min,
        theta_max: tc.theta_max,
        theta_central: tc.theta_central,
        theta_min: tc.theta_min,
        n_outliers: out_runs.len(),
        inference_time: subgroup(times, Some(&overall.inference_time)),
        response_len: subgroup(response_len, Some(&overall.response_len)),
        prompt_len: subgroup(prompt_len, Some(&overall.prompt_len)),
        latency: subgroup(latency, Some(&overall.latency)),
        throughput: subgroup(throughput, Some(&overall.throughput)),
        rouge_l: subgroup(rouge, overall.rouge_l.as_ref()),
        sts: subgroup(sts, overall.sts.as_ref()),
    })
}
