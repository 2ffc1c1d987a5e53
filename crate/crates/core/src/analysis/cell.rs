//! Whole-store analysis: one [`CellAnalysis`] document per grid cell.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::summary::{summarize_cell, summarize_outliers, OutlierSummaryRow, SummaryRow};
use super::throughcut::{
    throughcut, CentralLine, CloudPoint, IntervalSource, PointCloud, ThroughCutParams,
    ThroughCutResult,
};
use super::AnalysisError;
use crate::quality::QualityScores;
use crate::runner::{split_cell_key, RunRecord};

/// λ overrides and cone options. Unset λ values fall back to the defaults for
/// the cell's restriction (restricted: 0.005 / 0.5, unrestricted: 0.0005 / 0.05).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub lambda_max: Option<f64>,
    pub lambda_min: Option<f64>,
    #[serde(default)]
    pub interval_source: IntervalSource,
    #[serde(default)]
    pub central: CentralLine,
}

impl AnalysisOptions {
    pub fn params_for(&self, cell_key: &str) -> ThroughCutParams<f64> {
        let restricted = split_cell_key(cell_key).is_none_or(|(_, _, r)| r != "none");
        let defaults = ThroughCutParams::for_restriction(restricted);
        ThroughCutParams {
            lambda_max: self.lambda_max.unwrap_or(defaults.lambda_max),
            lambda_min: self.lambda_min.unwrap_or(defaults.lambda_min),
            interval_source: self.interval_source,
            central: self.central,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAnalysis {
    pub cell_key: String,
    pub params: ThroughCutParams<f64>,
    pub cloud: PointCloud<f64>,
    pub throughcut: Option<ThroughCutResult<f64>>,
    pub summary: Option<SummaryRow>,
    pub outliers: Option<OutlierSummaryRow>,
    /// Set when any stage failed for this cell; the other fields hold whatever
    /// could still be computed.
    pub error: Option<String>,
}

impl CellAnalysis {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Scatter points `(inference time, response words)` of one cell.
pub fn cloud_from_runs(
    cell_key: &str,
    runs: &[&RunRecord],
) -> Result<PointCloud<f64>, AnalysisError> {
    PointCloud::new(
        cell_key,
        runs.iter()
            .map(|r| CloudPoint {
                x: r.inference_time_s,
                y: r.response_word_len as f64,
                id: r.prompt_id.clone(),
            })
            .collect(),
    )
}

/// Analyzes every cell present in `runs`, in order of first appearance.
pub fn analyze_cells(
    runs: &[RunRecord],
    scores: &[QualityScores],
    opts: &AnalysisOptions,
) -> Vec<CellAnalysis> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_cell: HashMap<&str, Vec<&RunRecord>> = HashMap::new();
    for r in runs {
        by_cell
            .entry(r.cell_key.as_str())
            .or_insert_with(|| {
                order.push(r.cell_key.as_str());
                Vec::new()
            })
            .push(r);
    }
    let mut scores_by_cell: HashMap<&str, Vec<QualityScores>> = HashMap::new();
    for s in scores {
        scores_by_cell
            .entry(s.cell_key.as_str())
            .or_default()
            .push(s.clone());
    }

    order
        .into_iter()
        .map(|key| {
            let cell_runs: Vec<RunRecord> = by_cell[key].iter().map(|r| (*r).clone()).collect();
            let cell_scores = scores_by_cell.remove(key).unwrap_or_default();
            analyze_one(key, &cell_runs, &cell_scores, opts.params_for(key))
        })
        .collect()
}

fn analyze_one(
    key: &str,
    runs: &[RunRecord],
    scores: &[QualityScores],
    params: ThroughCutParams<f64>,
) -> CellAnalysis {
    let refs: Vec<&RunRecord> = runs.iter().collect();
    let mut errors = Vec::new();
    let cloud = cloud_from_runs(key, &refs).unwrap_or_else(|e| {
        errors.push(e.to_string());
        PointCloud {
            cell_key: key.to_string(),
            points: Vec::new(),
        }
    });
    let summary = summarize_cell(runs, scores)
        .map_err(|e| errors.push(format!("summary: {e}")))
        .ok();
    let tc = if cloud.is_empty() {
        None
    } else {
        throughcut(&cloud, &params)
            .map_err(|e| errors.push(format!("throughcut: {e}")))
            .ok()
    };
    let outliers = match (&tc, &summary) {
        (Some(tc), Some(summary)) => summarize_outliers(runs, scores, tc, summary)
            .map_err(|e| errors.push(format!("outliers: {e}")))
            .ok(),
        _ => None,
    };
    if !errors.is_empty() {
        log::warn!("{key}: {}", errors.join("; "));
    }
    CellAnalysis {
        cell_key: key.to_string(),
        params,
        cloud,
        throughcut: tc,
        summary,
        outliers,
        error: (!errors.is_empty()).then(|| errors.join("; ")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    fn run(cell: &str, id: &str, words: usize, secs: f64) -> RunRecord {
        RunRecord {
            cell_key: cell.into(),
            prompt_id: id.into(),
            prompt_word_len: 5,
            response_word_len: words,
            response_text: vec!["w"; words].join(" "),
            inference_time_s: secs,
            gpu_mem_peak_mb: None,
            gpu_mem_pct: None,
            started_at: Utc::now(),
        }
    }

    #[test]
    fn lambda_defaults_follow_restriction() {
        let o = AnalysisOptions::default();
        assert_eq!(o.params_for("2B/common/50").lambda_min, 0.5);
        assert_eq!(o.params_for("2B/common/none").lambda_min, 0.05);
        assert_eq!(o.params_for("2B/common/none").lambda_max, 0.0005);
        let o = AnalysisOptions {
            lambda_min: Some(0.2),
            ..Default::default()
        };
        assert_eq!(o.params_for("2B/common/none").lambda_min, 0.2);
        assert_eq!(o.params_for("2B/common/none").lambda_max, 0.0005);
    }

    #[test]
    fn zero_variance_cell_fails_alone() {
        let mut runs = Vec::new();
        for i in 0..4 {
            runs.push(run(
                "a/common/50",
                &format!("p{i}"),
                10 + i,
                1.0 + 0.2 * i as f64,
            ));
            runs.push(run("b/common/50", &format!("p{i}"), 10, 1.0));
        }
        let out = analyze_cells(&runs, &[], &AnalysisOptions::default());
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].cell_key, "a/common/50");
        assert!(out[0].is_ok());
        assert!(out[0].outliers.is_some());
        assert!(!out[1].is_ok());
        assert!(out[1]
            .error
            .as_ref()
            .unwrap()
            .contains("correlation undefined"));
        assert!(out[1].summary.is_some());
        assert!(out[1].throughcut.is_none());
    }
}
