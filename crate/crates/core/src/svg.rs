//! Deterministic SVG renders: heatmaps, line plots and bar charts.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{LocalityError, Result};
use crate::geometry::Geometry;

const CELL: f64 = 12.0;
const MARGIN: f64 = 40.0;
const LEGEND_W: f64 = 16.0;
const LOW: [u8; 3] = [255, 255, 255];
const HIGH: [u8; 3] = [8, 48, 107];

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let c: Vec<u8> = LOW
        .iter()
        .zip(HIGH)
        .map(|(&a, b)| (a as f64 + (b as f64 - a as f64) * t).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n\
         <rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"#ffffff\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of a `[targets x sources]` matrix drawn with sources as rows
/// and targets as columns. Segment changes along the site order become
/// grid lines.
pub fn render_heatmap(m: &Array2<f64>, geometry: Option<&Geometry>, title: &str) -> Result<String> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LocalityError::Validation("heatmap entries must be finite".into()));
    }
    let (targets, sources) = m.dim();
    if let Some(g) = geometry {
        if g.len() != targets || g.len() != sources {
            return Err(LocalityError::Shape(format!(
                "matrix is {targets}x{sources}, geometry has {} sites",
                g.len()
            )));
        }
    }
    let max = m.iter().copied().fold(0.0, f64::max);
    let (gw, gh) = (targets as f64 * CELL, sources as f64 * CELL);
    let width = MARGIN * 2.0 + gw + LEGEND_W + 60.0;
    let height = MARGIN * 2.0 + gh;
    let mut s = header(width, height);
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        MARGIN - 14.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"10\">columns: target, rows: source</text>",
        height - 12.0
    );
    for v in 0..sources {
        for u in 0..targets {
            let x = m[[u, v]];
            if x <= 0.0 {
                continue;
            }
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{CELL:.1}\" height=\"{CELL:.1}\" fill=\"{}\"/>",
                MARGIN + u as f64 * CELL,
                MARGIN + v as f64 * CELL,
                color(x / max)
            );
        }
    }
    if let Some(g) = geometry {
        for i in 1..g.len() {
            if g.segment_of(i) != g.segment_of(i - 1) {
                let at = i as f64 * CELL;
                let _ = writeln!(
                    s,
                    "<line x1=\"{:.1}\" y1=\"{MARGIN:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#d62728\" stroke-width=\"1\"/>",
                    MARGIN + at,
                    MARGIN + at,
                    MARGIN + gh
                );
                let _ = writeln!(
                    s,
                    "<line x1=\"{MARGIN:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#d62728\" stroke-width=\"1\"/>",
                    MARGIN + at,
                    MARGIN + gw,
                    MARGIN + at
                );
            }
        }
    }
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN:.1}\" y=\"{MARGIN:.1}\" width=\"{gw:.1}\" height=\"{gh:.1}\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>"
    );
    let lx = MARGIN + gw + 12.0;
    let _ = writeln!(
        s,
        "<defs><linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\"><stop offset=\"0\" stop-color=\"{}\"/><stop offset=\"1\" stop-color=\"{}\"/></linearGradient></defs>",
        color(0.0),
        color(1.0)
    );
    let _ = writeln!(
        s,
        "<rect x=\"{lx:.1}\" y=\"{MARGIN:.1}\" width=\"{LEGEND_W:.1}\" height=\"{gh:.1}\" fill=\"url(#scale)\" stroke=\"#000000\" stroke-width=\"0.5\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">max {}</text>",
        lx + LEGEND_W + 4.0,
        MARGIN + 8.0,
        fmt_num(max)
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">0</text>",
        lx + LEGEND_W + 4.0,
        MARGIN + gh
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 1e-3 && x.abs() < 1e4 {
        format!("{x:.4}")
    } else {
        format!("{x:.3e}")
    }
}

/// Named series for [`render_lines`].
pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
const PLOT_W: f64 = 360.0;
const PLOT_H: f64 = 220.0;

/// Line plot over shared x tick labels; non-finite points are skipped.
pub fn render_lines(title: &str, ticks: &[String], series: &[Series<'_>]) -> Result<String> {
    if ticks.is_empty() {
        return Err(LocalityError::InsufficientData("plot needs at least one tick".into()));
    }
    if series.iter().any(|s| s.values.len() != ticks.len()) {
        return Err(LocalityError::Shape("series length differs from ticks".into()));
    }
    let max = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|x| x.is_finite())
        .fold(0.0, f64::max);
    let scale = if max > 0.0 { max } else { 1.0 };
    let step = if ticks.len() > 1 {
        PLOT_W / (ticks.len() - 1) as f64
    } else {
        0.0
    };
    let px = |i: usize| MARGIN + i as f64 * step;
    let py = |v: f64| MARGIN + PLOT_H - v / scale * PLOT_H;
    let mut s = header(MARGIN * 2.0 + PLOT_W + 120.0, MARGIN * 2.0 + PLOT_H + 20.0);
    axes(&mut s, title, max);
    for (i, t) in ticks.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\">{}</text>",
            px(i),
            MARGIN + PLOT_H + 14.0,
            escape(t)
        );
    }
    for (k, ser) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ser
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.1},{:.1}", px(i), py(v)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"{c}\">{}</text>",
            MARGIN + PLOT_W + 10.0,
            MARGIN + 12.0 * (k + 1) as f64,
            escape(ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Vertical bars with an optional dashed reference line.
pub fn render_bars(title: &str, labels: &[String], values: &[f64], reference: Option<f64>) -> Result<String> {
    if labels.len() != values.len() || labels.is_empty() {
        return Err(LocalityError::Shape("bar labels and values must match".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LocalityError::Validation("bar values must be finite".into()));
    }
    let max = values
        .iter()
        .copied()
        .chain(reference)
        .fold(0.0, f64::max);
    let scale = if max > 0.0 { max } else { 1.0 };
    let slot = PLOT_W / labels.len() as f64;
    let mut s = header(MARGIN * 2.0 + PLOT_W + 20.0, MARGIN * 2.0 + PLOT_H + 20.0);
    axes(&mut s, title, max);
    for (i, (l, &v)) in labels.iter().zip(values).enumerate() {
        let h = v.max(0.0) / scale * PLOT_H;
        let x = MARGIN + i as f64 * slot + slot * 0.15;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{}\"/>",
            MARGIN + PLOT_H - h,
            slot * 0.7,
            PALETTE[0]
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\">{}</text>",
            x + slot * 0.35,
            MARGIN + PLOT_H + 14.0,
            escape(l)
        );
    }
    if let Some(r) = reference {
        let y = MARGIN + PLOT_H - r / scale * PLOT_H;
        let _ = writeln!(
            s,
            "<line x1=\"{MARGIN:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#d62728\" stroke-dasharray=\"4 3\"/>",
            MARGIN + PLOT_W
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn axes(s: &mut String, title: &str, max: f64) {
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        MARGIN - 14.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        "<polyline points=\"{MARGIN:.1},{MARGIN:.1} {MARGIN:.1},{:.1} {:.1},{:.1}\" fill=\"none\" stroke=\"#000000\"/>",
        MARGIN + PLOT_H,
        MARGIN + PLOT_W,
        MARGIN + PLOT_H
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"end\">{}</text>",
        MARGIN - 4.0,
        MARGIN + 4.0,
        fmt_num(max)
    );
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| LocalityError::io(path, e))
}
