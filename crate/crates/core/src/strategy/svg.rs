//! Static SVG renderings. Output is a pure function of the input, with
//! coordinates printed at fixed precision.

use std::fmt::Write;

use crate::faithfulness::FidelityCurve;
use crate::strategy::ClusterGraph;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;
const LEGEND_WIDTH: f64 = 160.0;

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Affine map of `[lo, hi]` onto `[a, b]`; a degenerate range maps to the
/// midpoint.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        0.5 * (a + b)
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn header(out: &mut String) {
    let total = WIDTH + LEGEND_WIDTH;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{HEIGHT}" viewBox="0 0 {total} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{total}" height="{HEIGHT}" fill="white"/>"#).unwrap();
}

fn legend(out: &mut String, entries: &[String]) {
    for (i, label) in entries.iter().enumerate() {
        let y = MARGIN + 18.0 * i as f64;
        writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="12" font-family="sans-serif">{}</text>"#,
            WIDTH + 8.0,
            y,
            color(i),
            WIDTH + 24.0,
            y + 9.0,
            escape(label)
        )
        .unwrap();
    }
}

/// Scatter of the graph's coordinates colored by dominant concept, with
/// misclassified samples outlined in black and a legend on the right.
pub fn cluster_graph_svg(graph: &ClusterGraph) -> String {
    let mut out = String::new();
    header(&mut out);
    let (x0, x1) = bounds(graph.coords.iter().map(|c| c[0]));
    let (y0, y1) = bounds(graph.coords.iter().map(|c| c[1]));
    for (i, c) in graph.coords.iter().enumerate() {
        let x = scale(c[0], x0, x1, MARGIN, WIDTH - MARGIN);
        let y = scale(c[1], y0, y1, HEIGHT - MARGIN, MARGIN);
        let stroke = if graph.misclassified[i] { r#" stroke="black" stroke-width="1.5""# } else { "" };
        writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"{stroke}/>"#, color(graph.colors[i])).unwrap();
    }
    legend(&mut out, &graph.legend);
    out.push_str("</svg>\n");
    out
}

/// Line plot of fidelity curves against the fraction of concepts removed or
/// inserted, one color per curve.
pub fn curves_svg(curves: &[FidelityCurve<f64>]) -> String {
    let mut out = String::new();
    header(&mut out);
    let (lo, hi) = bounds(curves.iter().flat_map(|c| c.scores.iter().copied()));
    writeln!(
        out,
        r#"<line x1="{MARGIN}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{0}" stroke="black"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    )
    .unwrap();
    let mut names = Vec::with_capacity(curves.len());
    for (i, curve) in curves.iter().enumerate() {
        let k = curve.k().max(1) as f64;
        let points: Vec<String> = curve
            .scores
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                let x = scale(j as f64 / k, 0.0, 1.0, MARGIN, WIDTH - MARGIN);
                let y = scale(s, lo, hi, HEIGHT - MARGIN, MARGIN);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            points.join(" "),
            color(i)
        )
        .unwrap();
        let method = curve.method.as_deref().unwrap_or("unnamed");
        names.push(format!("{method} {} ({:.3})", curve.metric, curve.auc));
    }
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}
