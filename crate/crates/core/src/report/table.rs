use serde::{Deserialize, Serialize};

use super::{fmt_mean_std, fmt_num, fmt_r, restriction_label, split_key, ReportError};
use crate::analysis::{Direction, GpuUsage, MeanStd, OutlierSummaryRow, SubgroupStat, SummaryRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Markdown,
    Csv,
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(TableFormat::Markdown),
            "csv" => Ok(TableFormat::Csv),
            other => Err(format!(
                "unknown table format `{other}` (expected md or csv)"
            )),
        }
    }
}

const DASH: &str = "-";

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn md_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| md_escape(c)).collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    out
}

fn csv_table(header: &[String], rows: &[Vec<String>]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| ReportError::Csv(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ReportError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Csv(e.to_string()))
}

fn stat_cell(s: &Option<MeanStd<f64>>) -> String {
    s.map_or_else(|| DASH.to_string(), |s| fmt_mean_std(s.mean, s.std))
}

fn stat_pair(s: &Option<MeanStd<f64>>) -> [String; 2] {
    match s {
        Some(s) => [fmt_num(s.mean), fmt_num(s.std)],
        None => [String::new(), String::new()],
    }
}

fn gpu_cell(g: &Option<GpuUsage>) -> String {
    match g {
        Some(GpuUsage {
            peak_mb,
            pct: Some(p),
        }) => format!("{peak_mb} ({}%)", fmt_num(*p)),
        Some(GpuUsage { peak_mb, pct: None }) => peak_mb.to_string(),
        None => DASH.to_string(),
    }
}

const SUMMARY_MD: [&str; 11] = [
    "Model",
    "Domain",
    "Restriction",
    "Throughput (μ ± σ)",
    "Latency (μ ± σ)",
    "GPU Mem MB (%)",
    "Response length (μ ± σ)",
    "ROUGE-L (μ ± σ)",
    "STS (μ ± σ)",
    "Length ratio (μ ± σ)",
    "n",
];

/// Per-cell overview table, one line per row in input order.
pub fn render_summary_table(
    rows: &[SummaryRow],
    format: TableFormat,
) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    match format {
        TableFormat::Markdown => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let (model, domain, restriction) = split_key(&r.cell_key);
                    vec![
                        model,
                        domain,
                        restriction_label(&restriction),
                        fmt_mean_std(r.throughput.mean, r.throughput.std),
                        fmt_mean_std(r.latency.mean, r.latency.std),
                        gpu_cell(&r.gpu_mem_peak_mb),
                        fmt_mean_std(r.response_len.mean, r.response_len.std),
                        stat_cell(&r.rouge_l),
                        stat_cell(&r.sts),
                        stat_cell(&r.length_ratio),
                        r.n.to_string(),
                    ]
                })
                .collect();
            Ok(md_table(&SUMMARY_MD, &body))
        }
        TableFormat::Csv => {
            let mut header: Vec<String> = ["model", "domain", "restriction"]
                .map(String::from)
                .to_vec();
            for name in ["throughput", "latency"] {
                header.push(format!("{name}_mean"));
                header.push(format!("{name}_std"));
            }
            header.push("gpu_mem_peak_mb".into());
            header.push("gpu_mem_pct".into());
            for name in ["response_len", "rouge_l", "sts", "length_ratio"] {
                header.push(format!("{name}_mean"));
                header.push(format!("{name}_std"));
            }
            header.push("n".into());
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let (model, domain, restriction) = split_key(&r.cell_key);
                    let mut row = vec![model, domain, restriction];
                    row.extend(stat_pair(&Some(r.throughput)));
                    row.extend(stat_pair(&Some(r.latency)));
                    match &r.gpu_mem_peak_mb {
                        Some(g) => {
                            row.push(g.peak_mb.to_string());
                            row.push(g.pct.map(fmt_num).unwrap_or_default());
                        }
                        None => row.extend([String::new(), String::new()]),
                    }
                    row.extend(stat_pair(&Some(r.response_len)));
                    row.extend(stat_pair(&r.rouge_l));
                    row.extend(stat_pair(&r.sts));
                    row.extend(stat_pair(&r.length_ratio));
                    row.push(r.n.to_string());
                    row
                })
                .collect();
            csv_table(&header, &body)
        }
    }
}

fn marker(d: Direction) -> &'static str {
    match d {
        Direction::Below => " (↓)",
        Direction::Above => " (↑)",
        Direction::Equal => "",
    }
}

fn direction_word(d: Direction) -> &'static str {
    match d {
        Direction::Below => "below",
        Direction::Above => "above",
        Direction::Equal => "equal",
    }
}

fn subgroup_cell(s: &Option<SubgroupStat>) -> String {
    match s {
        Some(s) => format!("{}{}", fmt_mean_std(s.mean, s.std), marker(s.direction)),
        None => DASH.to_string(),
    }
}

fn subgroups(r: &OutlierSummaryRow) -> [(&'static str, &Option<SubgroupStat>); 7] {
    [
        ("inference_time", &r.inference_time),
        ("response_len", &r.response_len),
        ("prompt_len", &r.prompt_len),
        ("latency", &r.latency),
        ("throughput", &r.throughput),
        ("rouge_l", &r.rouge_l),
        ("sts", &r.sts),
    ]
}

const OUTLIER_MD: [&str; 18] = [
    "Model",
    "Domain",
    "Restriction",
    "R",
    "m_max",
    "m_central",
    "m_min",
    "θ_max (rad)",
    "θ_central (rad)",
    "θ_min (rad)",
    "No. of outliers",
    "Inf. time s (μ ± σ)",
    "Response len (μ ± σ)",
    "Prompt len (μ ± σ)",
    "Latency (μ ± σ)",
    "Throughput (μ ± σ)",
    "ROUGE-L (μ ± σ)",
    "STS (μ ± σ)",
];

fn geometry(r: &OutlierSummaryRow) -> Vec<String> {
    let (model, domain, restriction) = split_key(&r.cell_key);
    vec![
        model,
        domain,
        restriction,
        fmt_r(r.r),
        fmt_num(r.m_max),
        fmt_num(r.m_central),
        fmt_num(r.m_min),
        fmt_num(r.theta_max),
        fmt_num(r.theta_central),
        fmt_num(r.theta_min),
        r.n_outliers.to_string(),
    ]
}

/// Outlier-subgroup table. Subgroup statistics carry `(↓)` when below the
/// cell's overall value and `(↑)` when above; CSV puts that in a paired
/// `_direction` column.
pub fn render_outlier_table(
    rows: &[OutlierSummaryRow],
    format: TableFormat,
) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    match format {
        TableFormat::Markdown => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut row = geometry(r);
                    row[2] = restriction_label(&row[2]);
                    row.extend(subgroups(r).iter().map(|(_, s)| subgroup_cell(s)));
                    row
                })
                .collect();
            Ok(md_table(&OUTLIER_MD, &body))
        }
        TableFormat::Csv => {
            let mut header: Vec<String> = [
                "model",
                "domain",
                "restriction",
                "r",
                "m_max",
                "m_central",
                "m_min",
                "theta_max",
                "theta_central",
                "theta_min",
                "n_outliers",
            ]
            .map(String::from)
            .to_vec();
            for (name, _) in subgroups(&rows[0]) {
                header.push(format!("{name}_mean"));
                header.push(format!("{name}_std"));
                header.push(format!("{name}_direction"));
            }
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut row = geometry(r);
                    for (_, s) in subgroups(r) {
                        match s {
                            Some(s) => row.extend([
                                fmt_num(s.mean),
                                fmt_num(s.std),
                                direction_word(s.direction).to_string(),
                            ]),
                            None => row.extend([String::new(), String::new(), String::new()]),
                        }
                    }
                    row
                })
                .collect();
            csv_table(&header, &body)
        }
    }
}
