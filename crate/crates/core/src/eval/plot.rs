//! Standalone SVG figures, each written next to a CSV of the plotted numbers.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::textio::{self, parse_f64, TextTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Planar paths with equal axis scales.
    Path,
    TrainingCurve,
    /// One bar per (category, series).
    Bar,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" => Ok(PlotKind::Path),
            "training_curve" | "training-curve" => Ok(PlotKind::TrainingCurve),
            "bar" => Ok(PlotKind::Bar),
            _ => Err(Error::Usage(format!(
                "unknown plot kind {s:?}; expected path, training_curve or bar"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// For bar plots, the category index.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Bar plots only: names of the x positions.
    pub categories: Vec<String>,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
/// First series red, second green; ground truth goes first by convention.
const COLORS: [&str; 6] = ["#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b"];

pub fn sidecar_path(svg: &Path) -> PathBuf {
    svg.with_extension("csv")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    sx: f64,
    sy: f64,
}

impl Frame {
    fn new(fig: &Figure) -> Self {
        let xs = fig.series.iter().flat_map(|s| s.x.iter().copied());
        let ys = fig.series.iter().flat_map(|s| s.y.iter().copied());
        let (mut x0, mut x1) = bounds(xs);
        let (mut y0, mut y1) = bounds(ys);
        if fig.kind == PlotKind::Bar {
            x0 -= 0.5;
            x1 += 0.5;
            y0 = y0.min(0.0);
            y1 = y1.max(0.0);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let mut sx = (WIDTH - 2.0 * MARGIN) / (x1 - x0);
        let mut sy = (HEIGHT - 2.0 * MARGIN) / (y1 - y0);
        if fig.kind == PlotKind::Path {
            let s = sx.min(sy);
            sx = s;
            sy = s;
        }
        Self { x0, x1, y0, y1, sx, sy }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) * self.sx
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) * self.sy
    }
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

pub fn render_svg(fig: &Figure) -> String {
    let f = Frame::new(fig);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(&fig.title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        escape(&fig.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&fig.y_label)
    );
    for (v, x, anchor) in [(f.x0, MARGIN, "start"), (f.x1, WIDTH - MARGIN, "end")] {
        if fig.kind != PlotKind::Bar {
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" text-anchor="{anchor}" font-size="10">{v:.3}</text>"#,
                HEIGHT - MARGIN + 14.0
            );
        }
    }
    for (v, y) in [(f.y0, HEIGHT - MARGIN), (f.y1, MARGIN + 10.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" text-anchor="end" font-size="10">{v:.3}</text>"#,
            MARGIN - 4.0
        );
    }
    match fig.kind {
        PlotKind::Path | PlotKind::TrainingCurve => {
            for (i, ser) in fig.series.iter().enumerate() {
                let pts: Vec<String> = ser
                    .x
                    .iter()
                    .zip(&ser.y)
                    .map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                    COLORS[i % COLORS.len()],
                    pts.join(" ")
                );
            }
        }
        PlotKind::Bar => {
            let n = fig.series.len().max(1) as f64;
            let bw = 0.8 / n * f.sx;
            for (i, ser) in fig.series.iter().enumerate() {
                for (&x, &y) in ser.x.iter().zip(&ser.y) {
                    let left = f.px(x - 0.4) + i as f64 * bw;
                    let (top, bottom) = (f.py(y.max(0.0)), f.py(y.min(0.0)));
                    let _ = writeln!(
                        s,
                        r#"<rect x="{left:.2}" y="{top:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
                        bottom - top,
                        COLORS[i % COLORS.len()]
                    );
                }
            }
            for (k, name) in fig.categories.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
                    f.px(k as f64),
                    HEIGHT - MARGIN + 14.0,
                    escape(name)
                );
            }
        }
    }
    for (i, ser) in fig.series.iter().enumerate() {
        let y = MARGIN + 16.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 120.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="3"/>"#,
            x + 20.0,
            COLORS[i % COLORS.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11">{}</text>"#,
            x + 26.0,
            y + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write the SVG and its `series,x,y` sidecar; returns the sidecar path.
pub fn emit_plot(fig: &Figure, path: &Path) -> Result<PathBuf> {
    if fig.series.is_empty() || fig.series.iter().all(|s| s.x.is_empty()) {
        return Err(Error::InsufficientData("nothing to plot".into()));
    }
    for s in &fig.series {
        if s.x.len() != s.y.len() {
            return Err(Error::LengthMismatch {
                left: s.x.len(),
                right: s.y.len(),
            });
        }
        if s.name.contains(',') {
            return Err(Error::Config(format!("series name {:?} contains a comma", s.name)));
        }
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, render_svg(fig))?;
    let csv = sidecar_path(path);
    let mut w = textio::create(&csv)?;
    if !fig.categories.is_empty() {
        writeln!(w, "# categories={}", fig.categories.join("|"))?;
    }
    writeln!(w, "series,x,y")?;
    for s in &fig.series {
        for (x, y) in s.x.iter().zip(&s.y) {
            writeln!(w, "{},{x},{y}", s.name)?;
        }
    }
    w.flush()?;
    Ok(csv)
}

/// Series back from a sidecar, in first-appearance order.
pub fn read_sidecar(path: &Path) -> Result<Vec<Series>> {
    let table = TextTable::read(path)?;
    let mut out: Vec<Series> = Vec::new();
    for (line, raw) in &table.rows {
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 3 {
            return Err(table.err(*line, format!("expected 3 columns, found {}", f.len())));
        }
        let x = parse_f64(f[1]).map_err(|m| table.err(*line, m))?;
        let y = parse_f64(f[2]).map_err(|m| table.err(*line, m))?;
        match out.iter_mut().find(|s| s.name == f[0]) {
            Some(s) => {
                s.x.push(x);
                s.y.push(y);
            }
            None => out.push(Series {
                name: f[0].to_string(),
                x: vec![x],
                y: vec![y],
            }),
        }
    }
    Ok(out)
}
