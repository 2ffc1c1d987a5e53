//! Aggregation, correlation and ThroughCut outlier analysis.

mod cell;
mod stats;
mod summary;
mod throughcut;

use thiserror::Error;

pub use cell::{analyze_cells, cloud_from_runs, AnalysisOptions, CellAnalysis};
pub use stats::{mean_std, pearson, MeanStd};
pub use summary::{
    summarize_cell, summarize_outliers, Direction, GpuUsage, OutlierSummaryRow, SubgroupStat,
    SummaryRow,
};
pub use throughcut::{
    central_slope, central_slope_with, theta_step, throughcut, CentralLine, CloudPoint,
    IntervalSource, PointCloud, ThroughCutParams, ThroughCutResult,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no values to aggregate")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate centroid: mean inference time is zero")]
    DegenerateCentroid,
    #[error("cone crosses vertical: theta_max >= pi/2 (lambda_max too large)")]
    ConeCrossesVertical,
    #[error("cone crosses horizontal: theta_min <= 0 (lambda_min too large)")]
    ConeCrossesHorizontal,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid point `{0}`: need finite x > 0 and y >= 0")]
    InvalidPoint(String),
    #[error("cell mismatch: expected `{expected}`, found `{found}`")]
    CellMismatch { expected: String, found: String },
    #[error("cell `{0}` has no usable runs")]
    EmptyCell(String),
}
