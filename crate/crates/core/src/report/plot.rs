use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{cell_file_stem, fmt_num, fmt_r, ReportError};
use crate::analysis::{CellAnalysis, CloudPoint, ThroughCutResult};

pub const X_LABEL: &str = "Inference time (s)";
pub const Y_LABEL: &str = "Response word length";

/// One scatter plot: points, the three origin-anchored boundary lines and
/// the caption values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub cell_key: String,
    pub points: Vec<CloudPoint<f64>>,
    pub m_max: f64,
    pub m_central: f64,
    pub m_min: f64,
    pub outlier_ids: Vec<String>,
    pub r: f64,
    pub x_label: String,
    pub y_label: String,
}

impl PlotSpec {
    pub fn new(points: Vec<CloudPoint<f64>>, tc: &ThroughCutResult<f64>) -> Self {
        PlotSpec {
            cell_key: tc.cell_key.clone(),
            points,
            m_max: tc.m_max,
            m_central: tc.m_central,
            m_min: tc.m_min,
            outlier_ids: tc.outlier_ids.clone(),
            r: tc.r,
            x_label: X_LABEL.to_string(),
            y_label: Y_LABEL.to_string(),
        }
    }

    /// `None` when the cell has no cone to draw.
    pub fn from_analysis(cell: &CellAnalysis) -> Option<Self> {
        cell.throughcut
            .as_ref()
            .map(|tc| PlotSpec::new(cell.cloud.points.clone(), tc))
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.points.is_empty() {
            return Err(ReportError::InvalidPlot(format!(
                "{}: no points",
                self.cell_key
            )));
        }
        if let Some(p) = self
            .points
            .iter()
            .find(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(ReportError::InvalidPlot(format!(
                "non-finite point `{}`",
                p.id
            )));
        }
        for m in [self.m_max, self.m_central, self.m_min, self.r] {
            if !m.is_finite() {
                return Err(ReportError::InvalidPlot(format!(
                    "{}: non-finite slope or R",
                    self.cell_key
                )));
            }
        }
        let ids: HashSet<&str> = self.points.iter().map(|p| p.id.as_str()).collect();
        if let Some(missing) = self
            .outlier_ids
            .iter()
            .find(|id| !ids.contains(id.as_str()))
        {
            return Err(ReportError::InvalidPlot(format!(
                "outlier `{missing}` is not a point"
            )));
        }
        Ok(())
    }

    pub fn caption(&self) -> String {
        format!(
            "R={}; No. of Outlier={}",
            fmt_r(self.r),
            self.outlier_ids.len()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Points as `x,y,id,is_outlier`, slopes in `#` comment lines on top.
pub fn render_scatter_csv(spec: &PlotSpec) -> Result<String, ReportError> {
    spec.validate()?;
    let outliers: HashSet<&str> = spec.outlier_ids.iter().map(String::as_str).collect();
    let mut out = format!(
        "# cell_key={}\n# m_max={}\n# m_central={}\n# m_min={}\n",
        spec.cell_key, spec.m_max, spec.m_central, spec.m_min
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| ReportError::Csv(e.to_string());
    w.write_record(["x", "y", "id", "is_outlier"])
        .map_err(csv_err)?;
    for p in &spec.points {
        let flag = outliers.contains(p.id.as_str());
        w.write_record([
            p.x.to_string(),
            p.y.to_string(),
            p.id.clone(),
            flag.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ReportError::Csv(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| ReportError::Csv(e.to_string()))?);
    Ok(out)
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 400.0;
const TICKS: usize = 5;

const INLIER_FILL: &str = "#1f4e9c";
const OUTLIER_FILL: &str = "#c00000";

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Frame {
    x_max: f64,
    y_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + x / self.x_max * (RIGHT - LEFT)
    }

    fn py(&self, y: f64) -> f64 {
        BOTTOM - y / self.y_max * (BOTTOM - TOP)
    }

    /// Where the ray y = m·x leaves the plotting box.
    fn ray_end(&self, m: f64) -> (f64, f64) {
        if m <= 0.0 {
            return (self.x_max, 0.0);
        }
        let y = m * self.x_max;
        if y > self.y_max {
            (self.y_max / m, self.y_max)
        } else {
            (self.x_max, y)
        }
    }
}

/// Self-contained SVG scatter plot: inliers as blue circles, outliers as red
/// squares, central line solid, max/min lines dashed.
pub fn render_scatter_svg(spec: &PlotSpec) -> Result<String, ReportError> {
    spec.validate()?;
    let outliers: HashSet<&str> = spec.outlier_ids.iter().map(String::as_str).collect();
    let peak = |f: fn(&CloudPoint<f64>) -> f64| spec.points.iter().map(f).fold(0.0_f64, f64::max);
    let frame = Frame {
        x_max: (peak(|p| p.x) * 1.1).max(1e-9),
        y_max: (peak(|p| p.y) * 1.1).max(1.0),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        esc(&spec.cell_key)
    );

    // axes and ticks
    let mut d = format!("M{LEFT:.2},{TOP:.2} L{LEFT:.2},{BOTTOM:.2} L{RIGHT:.2},{BOTTOM:.2}");
    let mut labels = String::new();
    for i in 0..=TICKS {
        let xv = frame.x_max * i as f64 / TICKS as f64;
        let yv = frame.y_max * i as f64 / TICKS as f64;
        let (px, py) = (frame.px(xv), frame.py(yv));
        let _ = write!(d, " M{px:.2},{BOTTOM:.2} L{px:.2},{:.2}", BOTTOM + 5.0);
        let _ = write!(d, " M{LEFT:.2},{py:.2} L{:.2},{py:.2}", LEFT - 5.0);
        let _ = writeln!(
            labels,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            BOTTOM + 18.0,
            fmt_num(xv)
        );
        let _ = writeln!(
            labels,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py + 4.0,
            fmt_num(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<path class="axis" d="{d}" fill="none" stroke="black"/>"#
    );
    s.push_str(&labels);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 40.0,
        esc(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        esc(&spec.y_label)
    );

    for (class, m, dash) in [
        ("max", spec.m_max, true),
        ("central", spec.m_central, false),
        ("min", spec.m_min, true),
    ] {
        let (xe, ye) = frame.ray_end(m);
        let dash = if dash {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        let _ = writeln!(
            s,
            r#"<line class="boundary {class}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"{dash}/>"#,
            frame.px(0.0),
            frame.py(0.0),
            frame.px(xe),
            frame.py(ye)
        );
    }

    for p in &spec.points {
        let (px, py) = (frame.px(p.x), frame.py(p.y));
        if outliers.contains(p.id.as_str()) {
            let _ = writeln!(
                s,
                r#"<rect class="point outlier" x="{:.2}" y="{:.2}" width="7" height="7" fill="{OUTLIER_FILL}"><title>{}</title></rect>"#,
                px - 3.5,
                py - 3.5,
                esc(&p.id)
            );
        } else {
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{px:.2}" cy="{py:.2}" r="3" fill="{INLIER_FILL}" fill-opacity="0.7"><title>{}</title></circle>"#,
                esc(&p.id)
            );
        }
    }

    // legend
    let lx = RIGHT - 110.0;
    let _ = writeln!(
        s,
        r#"<circle class="legend" cx="{:.2}" cy="{:.2}" r="3" fill="{INLIER_FILL}"/><text x="{:.2}" y="{:.2}">inlier</text>"#,
        lx,
        TOP + 10.0,
        lx + 10.0,
        TOP + 14.0
    );
    let _ = writeln!(
        s,
        r#"<rect class="legend" x="{:.2}" y="{:.2}" width="7" height="7" fill="{OUTLIER_FILL}"/><text x="{:.2}" y="{:.2}">outlier</text>"#,
        lx - 3.5,
        TOP + 24.5,
        lx + 10.0,
        TOP + 32.0
    );

    let _ = writeln!(
        s,
        r#"<text class="caption" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        esc(&spec.caption())
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn write(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<stem>.csv` and `<stem>.svg` into `out_dir`, creating it if needed.
pub fn emit_scatter(spec: &PlotSpec, out_dir: &Path) -> Result<PlotFiles, ReportError> {
    let csv = render_scatter_csv(spec)?;
    let svg = render_scatter_svg(spec)?;
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let stem = cell_file_stem(&spec.cell_key);
    let files = PlotFiles {
        csv: out_dir.join(format!("{stem}.csv")),
        svg: out_dir.join(format!("{stem}.svg")),
    };
    write(&files.csv, &csv)?;
    write(&files.svg, &svg)?;
    Ok(files)
}
