//! Static SVG scatter plots with optional rollout polylines.

use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Color for a class id; ids past the palette wrap around.
pub fn class_color(id: usize) -> String {
    PALETTE[id % PALETTE.len()].to_string()
}

/// Blue-to-red ramp for `t` in `[0, 1]`.
pub fn ramp_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 215.0 * t).round() as u8;
    let b = (255.0 - 215.0 * t).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

pub struct Marker {
    pub at: [f64; 2],
    pub color: String,
}

/// One `<circle>` per marker and one `<polyline>` per path, scaled to fit.
/// The y axis points up.
pub fn render_svg(markers: &[Marker], paths: &[Vec<[f64; 2]>]) -> String {
    let all = markers.iter().map(|m| m.at).chain(paths.iter().flatten().copied());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in all {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    if !lo[0].is_finite() {
        lo = [0.0, 0.0];
        hi = [1.0, 1.0];
    }
    let span = |d: usize| if hi[d] > lo[d] { hi[d] - lo[d] } else { 1.0 };
    let sx = (WIDTH - 2.0 * MARGIN) / span(0);
    let sy = (HEIGHT - 2.0 * MARGIN) / span(1);
    let map = |p: [f64; 2]| (MARGIN + (p[0] - lo[0]) * sx, HEIGHT - MARGIN - (p[1] - lo[1]) * sy);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for m in markers {
        let (x, y) = map(m.at);
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#, m.color);
    }
    for path in paths {
        let pts: Vec<String> = path
            .iter()
            .map(|&p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#, pts.join(" "));
    }
    out.push_str("</svg>\n");
    out
}
