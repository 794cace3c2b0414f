use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 7] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"];

fn polyline(values: &[f64], lo: f64, hi: f64, color: &str, width: f64) -> String {
    let n = values.len().max(2) - 1;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / n as f64;
            let y = HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / span;
            format!("{x:.2},{y:.2}")
        })
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
        points.join(" ")
    )
}

/// SVG line chart of `actual` with one line per forecast, in map order.
pub fn render_svg(title: &str, actual: &[f64], forecasts: &BTreeMap<String, Vec<f64>>) -> Result<String> {
    if actual.is_empty() {
        return Err(Error::EmptyInput("nothing to plot".into()));
    }
    for (name, f) in forecasts {
        if f.len() != actual.len() {
            return Err(Error::Shape(format!(
                "forecast `{name}` has {} points, actual has {}",
                f.len(),
                actual.len()
            )));
        }
    }
    let all = actual.iter().chain(forecasts.values().flatten()).copied();
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n\
         <line x1=\"{MARGIN}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#444\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{b}\" stroke=\"#444\"/>\n\
         <text x=\"4\" y=\"{MARGIN}\" font-family=\"sans-serif\" font-size=\"10\">{hi:.3}</text>\n\
         <text x=\"4\" y=\"{b}\" font-family=\"sans-serif\" font-size=\"10\">{lo:.3}</text>\n",
        escape(title),
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
    );
    svg.push_str(&polyline(actual, lo, hi, "#000000", 2.0));
    let mut legend = vec![("actual".to_string(), "#000000")];
    for (i, (name, f)) in forecasts.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.push_str(&polyline(f, lo, hi, color, 1.2));
        legend.push((name.clone(), color));
    }
    for (i, (name, color)) in legend.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{y}\" fill=\"{color}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            WIDTH - MARGIN - 90.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_plot(title: &str, actual: &[f64], forecasts: &BTreeMap<String, Vec<f64>>, out_path: &Path) -> Result<()> {
    let svg = render_svg(title, actual, forecasts)?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(out_path, svg).map_err(|e| Error::io(out_path, e))
}
