//! Plain SVG overlays of level sets over samples of `W`.

use std::fmt::Write as _;

use semireg::apps::LevelSet;
use semireg::grid::BoundingBox;
use semireg::oracle::Point;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 50.0;

struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn map(&self, p: &[f64]) -> (f64, f64) {
        let span = SIZE - 2.0 * MARGIN;
        let x = MARGIN + (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * span;
        let y = SIZE - MARGIN - (p[1] - self.lo[1]) / (self.hi[1] - self.lo[1]) * span;
        (x, y)
    }
}

/// Draws the box with labelled axes, `W` samples as dots and each level set's segments.
pub fn overlay(bbox: &BoundingBox, w_samples: &[Point], sets: &[LevelSet]) -> String {
    let frame = Frame { lo: [bbox.lo[0], bbox.lo[1]], hi: [bbox.hi[0], bbox.hi[1]] };
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let (x0, y0) = frame.map(&frame.lo);
    let (x1, y1) = frame.map(&frame.hi);
    let _ = writeln!(out, r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    let label = |out: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{y:.2}" font-size="12" text-anchor="{anchor}">{text}</text>"#);
    };
    label(&mut out, x0, y0 + 18.0, "middle", format!("{}", frame.lo[0]));
    label(&mut out, x1, y0 + 18.0, "middle", format!("{}", frame.hi[0]));
    label(&mut out, x0 - 6.0, y0, "end", format!("{}", frame.lo[1]));
    label(&mut out, x0 - 6.0, y1 + 4.0, "end", format!("{}", frame.hi[1]));
    label(&mut out, (x0 + x1) / 2.0, y0 + 36.0, "middle", "x".into());
    label(&mut out, x0 - 30.0, (y0 + y1) / 2.0, "middle", "y".into());
    for p in w_samples {
        let (x, y) = frame.map(p);
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.2" fill="black"/>"#);
    }
    let shades = ["#1f4e9c", "#2e7d32", "#b23c17", "#6a1b9a", "#00838f"];
    for (k, set) in sets.iter().enumerate() {
        let colour = shades[k % shades.len()];
        let _ = writeln!(out, r#"<g stroke="{colour}" stroke-width="1"><title>t = {}</title>"#, set.t);
        for &(a, b) in &set.segments {
            let (xa, ya) = frame.map(&set.points[a]);
            let (xb, yb) = frame.map(&set.points[b]);
            let _ = writeln!(out, r#"<line x1="{xa:.2}" y1="{ya:.2}" x2="{xb:.2}" y2="{yb:.2}"/>"#);
        }
        let _ = writeln!(out, "</g>");
        label(&mut out, x1 + 4.0, y1 + 16.0 * (k as f64 + 1.0), "start", format!("t={}", set.t));
    }
    out.push_str("</svg>\n");
    out
}
