//! Table and scatter-plot rendering. Everything here is pure and
//! deterministic: identical rows give byte-identical output.

mod plot;
mod table;

use std::path::PathBuf;

use thiserror::Error;

pub use plot::{emit_scatter, render_scatter_csv, render_scatter_svg, PlotFiles, PlotSpec};
pub use table::{render_outlier_table, render_summary_table, TableFormat};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to render")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("invalid plot: {0}")]
    InvalidPlot(String),
}

/// Two decimals with trailing zeros trimmed, keeping one: `12.0`, `2.88`, `0.2`.
pub fn fmt_num(v: f64) -> String {
    let mut s = format!("{v:.2}");
    if s.contains('.') {
        while s.ends_with('0') && !s.ends_with(".0") {
            s.pop();
        }
    }
    if s == "-0.0" {
        s.remove(0);
    }
    s
}

/// Correlation coefficients keep four decimals: `0.9761`.
pub fn fmt_r(r: f64) -> String {
    let s = format!("{r:.4}");
    if s == "-0.0000" {
        return s[1..].to_string();
    }
    s
}

pub fn fmt_mean_std(mean: f64, std: f64) -> String {
    format!("{} ± {}", fmt_num(mean), fmt_num(std))
}

/// Printable restriction: `≈50` / `∞` for markdown, the raw token otherwise.
pub fn restriction_label(token: &str) -> String {
    match token {
        "none" => "∞".to_string(),
        n => format!("≈{n}"),
    }
}

/// File stem for a cell key (`2B/common/50` → `2B__common__50`).
pub fn cell_file_stem(cell_key: &str) -> String {
    cell_key.replace('/', "__")
}

pub(crate) fn split_key(cell_key: &str) -> (String, String, String) {
    match crate::runner::split_cell_key(cell_key) {
        Some((m, d, r)) => (m.to_string(), d.to_string(), r.to_string()),
        None => (cell_key.to_string(), String::new(), String::new()),
    }
}
