//! SVG rendering with group colours.

use std::fmt::Write;

use crate::stroke::{GroupLabels, Sketch};

pub const CANVAS: f64 = 256.0;
const MARGIN: f64 = 8.0;

pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#ad494a",
];

/// Fit the drawing into a 256×256 canvas and draw one path per stroke, split where the
/// group changes. Positive `dy` points down the page. Without labels every path uses the
/// first palette colour.
pub fn render_svg(sketch: &Sketch, labels: Option<&GroupLabels>) -> String {
    let pts = sketch.absolute_points();
    let (mut x0, mut y0, mut x1, mut y1) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0);
    let scale = if span > 0.0 {
        (CANVAS - 2.0 * MARGIN) / span
    } else {
        1.0
    };
    let ox = (CANVAS - (x1 - x0) * scale) / 2.0;
    let oy = (CANVAS - (y1 - y0) * scale) / 2.0;
    let at = |i: usize| ((pts[i].0 - x0) * scale + ox, (pts[i].1 - y0) * scale + oy);
    let label = |i: usize| labels.map_or(0, |l| l.as_slice()[i]);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{c}" height="{c}" viewBox="0 0 {c} {c}">"#,
        c = CANVAS
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for r in sketch.stroke_ranges() {
        // segment i draws the edge into point i; a run starts at the point before it
        let mut i = r.start;
        while i < r.end {
            let g = label(i);
            let mut j = i + 1;
            while j < r.end && label(j) == g {
                j += 1;
            }
            let first = if i == r.start { i } else { i - 1 };
            let (sx, sy) = at(first);
            let mut d = format!("M{sx:.2} {sy:.2}");
            if first + 1 == j {
                d.push_str(" l0 0");
            }
            for k in first + 1..j {
                let (x, y) = at(k);
                let _ = write!(d, " L{x:.2} {y:.2}");
            }
            let _ = writeln!(
                svg,
                r#"<path d="{d}" fill="none" stroke="{}" stroke-width="2" stroke-linecap="round" stroke-linejoin="round"/>"#,
                PALETTE[g % PALETTE.len()]
            );
            i = j;
        }
    }
    svg.push_str("</svg>\n");
    svg
}
