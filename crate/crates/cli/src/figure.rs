//! Two-panel SVG: the free energy `β ↦ t(β)` on the left, the spectrum
//! `α ↦ f(α)` on the right.

use std::fmt::Write;

/// Everything drawn in the figure. Empty curves give axes only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FigureData {
    pub free_energy: Vec<(f64, f64)>,
    pub spectrum: Vec<(f64, f64)>,
    /// `t(0)`.
    pub delta: Option<f64>,
    pub delta_c: Option<f64>,
}

const PANEL_W: f64 = 400.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 50.0;
const GAP: f64 = 80.0;

struct Frame {
    left: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * PANEL_W
    }

    fn py(&self, y: f64) -> f64 {
        MARGIN + PANEL_H - (y - self.y.0) / (self.y.1 - self.y.0) * PANEL_H
    }
}

fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn range(values: impl Iterator<Item = f64>, fallback: (f64, f64)) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo < hi {
        (lo, hi)
    } else {
        fallback
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], style: &str) {
    let coords: Vec<String> = pts
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| format!("{},{}", num(f.px(x)), num(f.py(y))))
        .collect();
    if coords.len() >= 2 {
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" {style}/>"#, coords.join(" "));
    }
}

fn axes(out: &mut String, f: &Frame, clip: &str, xlabel: &str, ylabel: &str) {
    let (x0, y0) = (f.left, MARGIN + PANEL_H);
    let _ = writeln!(
        out,
        r#"<clipPath id="{clip}"><rect x="{}" y="{}" width="{}" height="{}"/></clipPath>"#,
        num(x0),
        num(MARGIN),
        num(PANEL_W),
        num(PANEL_H)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        num(x0),
        num(MARGIN),
        num(PANEL_W),
        num(PANEL_H)
    );
    for k in 0..=4 {
        let xv = f.x.0 + (f.x.1 - f.x.0) * k as f64 / 4.0;
        let yv = f.y.0 + (f.y.1 - f.y.0) * k as f64 / 4.0;
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"#,
            num(px),
            num(y0),
            num(y0 + 5.0),
            num(y0 + 20.0),
            num(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="black"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"#,
            num(x0 - 5.0),
            num(x0),
            num(py),
            num(x0 - 8.0),
            num(py + 4.0),
            num(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        num(x0 + PANEL_W / 2.0),
        num(y0 + 40.0)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="start">{ylabel}</text>"#,
        num(x0),
        num(MARGIN - 12.0)
    );
}

fn label(out: &mut String, x: f64, y: f64, text: &str) {
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{text}</text>"#, num(x), num(y));
}

/// Deterministic SVG 1.1 text.
pub fn emit_figure(data: &FigureData) -> String {
    let width = 2.0 * PANEL_W + 2.0 * MARGIN + GAP;
    let height = PANEL_H + 2.0 * MARGIN + 20.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        num(width),
        num(height)
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    // free energy
    let xb = range(data.free_energy.iter().map(|p| p.0), (-1.0, 1.0));
    let top = range(data.free_energy.iter().map(|p| p.1).chain(data.delta), (0.0, 1.0)).1;
    let left = Frame {
        left: MARGIN,
        x: xb,
        y: (0.0, if top > 0.0 { top * 1.05 } else { 1.0 }),
    };
    axes(&mut out, &left, "free-energy", "β", "t(β)");
    let _ = writeln!(out, r#"<g clip-path="url(#free-energy)">"#);
    polyline(
        &mut out,
        &left,
        &[(xb.0, 0.5 - xb.0), (xb.1, 0.5 - xb.1)],
        r#"stroke="gray" stroke-dasharray="6,4""#,
    );
    if let Some(dc) = data.delta_c {
        polyline(&mut out, &left, &[(xb.0, dc), (xb.1, dc)], r#"stroke="gray" stroke-dasharray="2,3""#);
    }
    polyline(&mut out, &left, &data.free_energy, r#"stroke="black" stroke-width="1.5""#);
    let _ = writeln!(out, "</g>");
    label(&mut out, left.px(xb.0) + 6.0, left.py((0.5 - xb.0).min(left.y.1)) + 14.0, "t = 1/2 − β");
    if let Some(dc) = data.delta_c {
        label(&mut out, left.px(xb.1) - 30.0, left.py(dc) - 4.0, "δ_c");
    }
    if let Some(d) = data.delta {
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="3" fill="black"/>"#,
            num(left.px(0.0)),
            num(left.py(d))
        );
        label(&mut out, left.px(0.0) + 5.0, left.py(d) - 5.0, "δ");
    }

    // spectrum
    let fmax = range(data.spectrum.iter().map(|p| p.1).chain(data.delta), (0.0, 1.0)).1;
    let right = Frame {
        left: MARGIN + PANEL_W + GAP,
        x: (0.0, 1.0),
        y: (0.0, if fmax > 0.0 { fmax * 1.1 } else { 1.0 }),
    };
    axes(&mut out, &right, "spectrum", "α", "f(α)");
    let _ = writeln!(out, r#"<g clip-path="url(#spectrum)">"#);
    if let Some(dc) = data.delta_c {
        polyline(&mut out, &right, &[(0.0, dc), (1.0, dc)], r#"stroke="gray" stroke-dasharray="2,3""#);
    }
    polyline(&mut out, &right, &[(0.0, 0.5), (1.0, 0.5)], r#"stroke="gray" stroke-dasharray="2,3""#);
    polyline(&mut out, &right, &data.spectrum, r#"stroke="black" stroke-width="1.5""#);
    let _ = writeln!(out, "</g>");
    let mut marks = vec![(1.0, 0.5, "(1, 1/2)")];
    if let Some(dc) = data.delta_c {
        marks.insert(0, (0.0, dc, "(0, δ_c)"));
    }
    for (x, y, text) in marks {
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="3.5" fill="white" stroke="black"/>"#,
            num(right.px(x)),
            num(right.py(y))
        );
        let dx = if x > 0.5 { -52.0 } else { 6.0 };
        label(&mut out, right.px(x) + dx, right.py(y) - 8.0, text);
    }
    if let Some(d) = data.delta {
        label(&mut out, right.px(0.0) + 6.0, right.py(d) - 6.0, "δ");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_figure_has_axes() {
        let svg = emit_figure(&FigureData::default());
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 5);
        assert!(svg.contains("(1, 1/2)"));
    }

    #[test]
    fn figure_is_deterministic() {
        let data = FigureData {
            free_energy: (0..21).map(|k| (k as f64 - 10.0, 1.0 + 0.05 * (k as f64 - 10.0).powi(2))).collect(),
            spectrum: (0..11).map(|k| (k as f64 / 10.0, 0.9 - 0.3 * (k as f64 / 10.0 - 0.3).powi(2))).collect(),
            delta: Some(1.0),
            delta_c: Some(0.87),
        };
        assert_eq!(emit_figure(&data), emit_figure(&data.clone()));
        assert!(emit_figure(&data).contains("(0, δ_c)"));
    }
}
