//! CSV, SVG and JSON artifacts.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use chaoslab::mc::loglog_slope;

use crate::report::{RatePlot, Table};

pub fn csv_bytes(table: &Table) -> io::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|c| c.render()))?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn write_csv(dir: &Path, table: &Table) -> io::Result<String> {
    let file = format!("{}.csv", table.name);
    std::fs::write(dir.join(&file), csv_bytes(table)?)?;
    Ok(file)
}

pub fn write_json(dir: &Path, file: &str, value: &serde_json::Value) -> io::Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(dir.join(file), text)?;
    Ok(file.to_string())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad"];

fn positive_points(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    xs.iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .unzip()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log plot with one polyline per series and the fitted slope in the legend.
/// Nonpositive values cannot be drawn on a log axis and are skipped.
pub fn svg(plot: &RatePlot) -> String {
    let pts: Vec<(Vec<f64>, Vec<f64>)> = plot.series.iter().map(|s| positive_points(&s.xs, &s.ys)).collect();
    let all_x: Vec<f64> = pts.iter().flat_map(|p| p.0.iter().copied()).collect();
    let all_y: Vec<f64> = pts.iter().flat_map(|p| p.1.iter().copied()).collect();
    let range = |v: &[f64]| {
        if v.is_empty() {
            return (0.0, 1.0);
        }
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max).log10().ceil();
        if hi > lo { (lo, hi) } else { (lo, lo + 1.0) }
    };
    let (x0, x1) = range(&all_x);
    let (y0, y1) = range(&all_y);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y.log10() - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for d in (x0 as i32)..=(x1 as i32) {
        let x = sx(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"##,
            TOP + ph,
            TOP + ph + 16.0
        );
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{} (log scale)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&plot.x_label)
    );
    for (k, (series, (xs, ys))) in plot.series.iter().zip(&pts).enumerate() {
        let color = COLORS[k % COLORS.len()];
        if !xs.is_empty() {
            let path: Vec<String> = xs.iter().zip(ys).map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for (x, y) in xs.iter().zip(ys) {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(*x), sy(*y));
            }
        }
        let slope = if xs.len() >= 2 {
            format!("slope {:.3}", loglog_slope(xs, ys))
        } else {
            "slope n/a".to_string()
        };
        let ly = TOP + 18.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{} ({slope})</text>"#,
            LEFT + pw - 190.0,
            LEFT + pw - 170.0,
            LEFT + pw - 164.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(dir: &Path, plot: &RatePlot) -> io::Result<String> {
    let file = format!("{}.svg", plot.name);
    std::fs::write(dir.join(&file), svg(plot))?;
    Ok(file)
}
