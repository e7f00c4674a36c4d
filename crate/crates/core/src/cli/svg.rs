//! Minimal SVG histogram plots.

use std::fmt::Write as _;

use statrs::distribution::{Continuous, Normal};

use crate::metrics::Histogram;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 36.0;

/// Bars of the empirical density with the moment-matched Gaussian overlaid.
pub fn histogram_svg(h: &Histogram, title: &str) -> String {
    let total: usize = h.counts.iter().sum();
    let lo = h.edges[0];
    let hi = *h.edges.last().expect("edges");
    let bin = (hi - lo) / h.counts.len() as f64;
    let density: Vec<f64> = h
        .counts
        .iter()
        .map(|&c| c as f64 / (total.max(1) as f64 * bin))
        .collect();
    let normal = Normal::new(h.mean, h.std).expect("positive std");
    let curve: Vec<(f64, f64)> = (0..=200)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 200.0;
            (x, normal.pdf(x))
        })
        .collect();
    let top = density
        .iter()
        .copied()
        .chain(curve.iter().map(|p| p.1))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let px = |x: f64| MARGIN + (x - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - y / top * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for (i, d) in density.iter().enumerate() {
        let x0 = px(h.edges[i]);
        let x1 = px(h.edges[i + 1]);
        let y = py(*d);
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#7aa6d6"/>"##,
            (x1 - x0).max(0.0),
            (HEIGHT - MARGIN - y).max(0.0)
        );
    }
    let points: Vec<String> = curve
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="1.5"/>"##,
        points.join(" ")
    );
    let axis = HEIGHT - MARGIN;
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{axis}" x2="{}" y2="{axis}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    for (x, anchor) in [(lo, "start"), (h.mean, "middle"), (hi, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{x:.3}</text>"#,
            px(x),
            axis + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
