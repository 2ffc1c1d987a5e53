//! Benchmarking toolkit for locally hosted language models: prompt corpora,
//! an OpenAI-compatible client, a resumable benchmark runner, quality metrics,
//! the ThroughCut outlier analysis and table/plot rendering.

pub mod analysis;
pub mod corpus;
pub mod endpoint;
pub mod jsonl;
pub mod mock;
pub mod quality;
pub mod report;
pub mod runner;

pub type PointCloudF64 = analysis::PointCloud<f64>;
pub type PointCloudF32 = analysis::PointCloud<f32>;
pub type ThroughCutParamsF64 = analysis::ThroughCutParams<f64>;
pub type ThroughCutParamsF32 = analysis::ThroughCutParams<f32>;
pub type ThroughCutResultF64 = analysis::ThroughCutResult<f64>;
pub type ThroughCutResultF32 = analysis::ThroughCutResult<f32>;
pub type MeanStdF64 = analysis::MeanStd<f64>;
pub type MeanStdF32 = analysis::MeanStd<f32>;
