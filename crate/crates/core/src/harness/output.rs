//! CSV and SVG rendering of a [`ResultSeries`].
//!
//! Floats are written with `Display`, which is the shortest string that
//! parses back to the same value, so CSV output round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::PlotStyle;
use super::run::{ResultRow, ResultSeries};
use super::HarnessError;

pub const CSV_HEADER: &str = "config_id,step,time,metric,value,stderr,flag";

/// Plot area is square so that equal decade spans on a log-log plot give
/// equal pixel lengths.
const WIDTH: f64 = 740.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 230.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn to_csv(series: &ResultSeries) -> String {
    let mut s = String::with_capacity(64 * (series.rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in &series.rows {
        let stderr = r.stderr.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.config_id, r.step, r.time, r.metric, r.value, stderr, r.flag
        );
    }
    s
}

pub fn write_csv(series: &ResultSeries, path: &Path) -> Result<(), HarnessError> {
    fs::write(path, to_csv(series)).map_err(|e| HarnessError::io(path, e))
}

pub fn parse_csv(text: &str) -> Result<ResultSeries, HarnessError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => {
            return Err(HarnessError::Config(format!(
                "csv header mismatch: expected '{CSV_HEADER}', found '{}'",
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| HarnessError::Config(format!("csv line {}: bad {what}", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("field count"));
        }
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        rows.push(ResultRow {
            config_id: f[0].to_string(),
            step: f[1].parse().map_err(|_| bad("step"))?,
            time: num(f[2], "time")?,
            metric: f[3].to_string(),
            value: num(f[4], "value")?,
            stderr: if f[5].is_empty() { None } else { Some(num(f[5], "stderr")?) },
            flag: f[6].to_string(),
        });
    }
    Ok(ResultSeries { rows })
}

#[derive(Clone, Copy)]
struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { log, lo: 0.0, hi: 1.0 };
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo < 1e-12 {
            let pad = if log { 1.0 } else { lo.abs().max(1.0) * 0.5 };
            lo -= pad;
            hi += pad;
        }
        Self { log, lo, hi }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in data units: decades on a log axis, five even steps otherwise.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.round() as i32, self.hi.round() as i32);
            let stride = ((b - a) / 8).max(1);
            (a..=b).step_by(stride as usize).map(|e| 10f64.powi(e)).collect()
        } else {
            (0..=5).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 5.0).collect()
        }
    }
}

fn label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.log10().round() as i32)
    } else if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders value against time, one polyline per config. Diverged and
/// non-finite rows are skipped.
pub fn render_svg(series: &ResultSeries, style: PlotStyle) -> Result<String, HarnessError> {
    let (xlog, ylog) = match style {
        PlotStyle::Linear => (false, false),
        PlotStyle::SemilogY => (false, true),
        PlotStyle::LogLog => (true, true),
    };
    let finite: Vec<&ResultRow> = series.rows.iter().filter(|r| r.value.is_finite()).collect();
    for r in &finite {
        if ylog && r.value <= 0.0 {
            return Err(HarnessError::Plot(format!(
                "{} at step {} has value {} on a log axis",
                r.config_id, r.step, r.value
            )));
        }
    }
    // t = 0 cannot sit on a log axis; those points are dropped
    let pts: Vec<&ResultRow> = finite.into_iter().filter(|r| !xlog || r.time > 0.0).collect();
    let mut xa = Axis::fit(pts.iter().map(|r| r.time), xlog);
    let mut ya = Axis::fit(pts.iter().map(|r| r.value), ylog);
    if xlog && ylog {
        let span = (xa.hi - xa.lo).max(ya.hi - ya.lo);
        xa.hi = xa.lo + span;
        ya.hi = ya.lo + span;
    }
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + xa.frac(x) * pw;
    let py = |y: f64| MARGIN_T + (1.0 - ya.frac(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in xa.ticks() {
        let x = px(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_T + ph,
            MARGIN_T + ph + 5.0,
            MARGIN_T + ph + 18.0,
            label(t, xlog)
        );
    }
    for t in ya.ticks() {
        let y = py(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_L}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 5.0,
            MARGIN_L - 8.0,
            y + 4.0,
            label(t, ylog)
        );
    }
    let metric = series.rows.first().map(|r| r.metric.as_str()).unwrap_or("value");
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(metric)
    );
    for (i, id) in series.config_ids().iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let poly: Vec<String> = pts
            .iter()
            .filter(|r| &r.config_id == id)
            .map(|r| format!("{:.2},{:.2}", px(r.time), py(r.value)))
            .collect();
        if !poly.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                poly.join(" ")
            );
        }
        let ly = MARGIN_T + 12.0 + 16.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(id)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg_plot(series: &ResultSeries, style: PlotStyle, path: &Path) -> Result<(), HarnessError> {
    let svg = render_svg(series, style)?;
    fs::write(path, svg).map_err(|e| HarnessError::io(path, e))
}
