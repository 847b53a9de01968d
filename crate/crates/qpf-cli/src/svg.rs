//! Deterministic SVG 1.1 scatter plots with θ on the horizontal axis.

use std::fmt::{self, Write};

/// Largest number of points a document may hold.
pub const MAX_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SvgError {
    TooManyPoints { points: usize, limit: usize },
}

impl fmt::Display for SvgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SvgError::TooManyPoints { points, limit } => write!(f, "{points} points exceed the limit of {limit}"),
        }
    }
}

impl std::error::Error for SvgError {}

/// Named colours used for the usual roles.
pub const ATTRACTOR: &str = "#000000";
pub const REPELLER: &str = "#8c8c8c";

/// One set of `(θ, x)` points drawn in one colour.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: &str, color: &str, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.into(), color: color.into(), points }
    }
}

/// One plot area; several panels are laid out on a grid.
#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
    /// Fixed vertical range; taken from the data when `None`.
    pub y_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Style {
    pub panel_width: f64,
    pub panel_height: f64,
    pub columns: usize,
    pub radius: f64,
}

impl Default for Style {
    fn default() -> Self {
        Style { panel_width: 320.0, panel_height: 240.0, columns: 3, radius: 0.6 }
    }
}

const MARGIN: f64 = 36.0;

fn y_bounds(panel: &Panel) -> (f64, f64) {
    if let Some(r) = panel.y_range {
        return r;
    }
    let (lo, hi) = panel
        .series
        .iter()
        .flat_map(|s| &s.points)
        .map(|p| p.1)
        .filter(|y| y.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the panels row by row. Points with a non-finite coordinate are
/// skipped; θ is wrapped into `[0, 1)`.
pub fn emit_svg(panels: &[Panel], style: &Style) -> Result<String, SvgError> {
    let total: usize = panels.iter().flat_map(|p| &p.series).map(|s| s.points.len()).sum();
    if total > MAX_POINTS {
        return Err(SvgError::TooManyPoints { points: total, limit: MAX_POINTS });
    }
    let panels: Vec<Panel> = if panels.is_empty() { vec![Panel::default()] } else { panels.to_vec() };
    let cols = style.columns.max(1).min(panels.len());
    let rows = panels.len().div_ceil(cols);
    let (pw, ph) = (style.panel_width, style.panel_height);
    let mut out = String::new();
    // writing to a String cannot fail
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        pw * cols as f64,
        ph * rows as f64,
        pw * cols as f64,
        ph * rows as f64
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (k, panel) in panels.iter().enumerate() {
        let (ox, oy) = ((k % cols) as f64 * pw, (k / cols) as f64 * ph);
        let (x0, y0) = (ox + MARGIN, oy + MARGIN / 2.0);
        let (w, h) = (pw - 1.5 * MARGIN, ph - 1.5 * MARGIN);
        let (lo, hi) = y_bounds(panel);
        let _ = writeln!(out, r#"<g id="panel-{k}">"#);
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{y0:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#000000" stroke-width="0.8"/>"##
        );
        for tick in 0..=4 {
            let t = tick as f64 / 4.0;
            let x = x0 + t * w;
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{:.2}" font-size="9" text-anchor="middle">{t:.2}</text>"#,
                y0 + h + 11.0
            );
        }
        for (y, v) in [(y0 + h, lo), (y0 + 4.0, hi)] {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{y:.2}" font-size="9" text-anchor="end">{v:.3}</text>"#,
                x0 - 3.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            x0 + w / 2.0,
            y0 - 4.0,
            escape(&panel.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">θ</text>"#,
            x0 + w / 2.0,
            y0 + h + 22.0
        );
        for s in &panel.series {
            let _ = writeln!(out, r#"<g fill="{}"><title>{}</title>"#, escape(&s.color), escape(&s.label));
            for &(t, y) in &s.points {
                if !t.is_finite() || !y.is_finite() {
                    continue;
                }
                let t = t.rem_euclid(1.0);
                let px = x0 + t * w;
                let py = y0 + h - (y - lo) / (hi - lo) * h;
                if py < y0 - 1e-9 || py > y0 + h + 1e-9 {
                    continue;
                }
                let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="{:.2}"/>"#, style.radius);
            }
            let _ = writeln!(out, "</g>");
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_axes_only() {
        let s = emit_svg(&[], &Style::default()).unwrap();
        assert!(s.starts_with("<?xml"));
        assert!(s.contains(r#"version="1.1""#));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(!s.contains("<circle"));
        assert!(s.contains("<rect x="));
    }

    #[test]
    fn limit_is_enforced() {
        let big = Panel { series: vec![Series::new("a", ATTRACTOR, vec![(0.5, 0.0); MAX_POINTS + 1])], ..Default::default() };
        assert_eq!(
            emit_svg(&[big], &Style::default()).unwrap_err(),
            SvgError::TooManyPoints { points: MAX_POINTS + 1, limit: MAX_POINTS }
        );
    }

    #[test]
    fn overlay_uses_both_colours_and_is_stable() {
        let pts: Vec<(f64, f64)> = (0..100).map(|k| (k as f64 / 100.0, (k as f64).sin())).collect();
        let panel = Panel {
            title: "overlay".into(),
            series: vec![Series::new("attractor", ATTRACTOR, pts.clone()), Series::new("repeller", REPELLER, pts)],
            y_range: None,
        };
        let a = emit_svg(std::slice::from_ref(&panel), &Style::default()).unwrap();
        let b = emit_svg(&[panel], &Style::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(ATTRACTOR) && a.contains(REPELLER));
        assert_eq!(a.matches("<circle").count(), 200);
    }

    #[test]
    fn panels_fill_a_grid() {
        let panels: Vec<Panel> = (0..6).map(|k| Panel { title: format!("n = {k}"), ..Default::default() }).collect();
        let s = emit_svg(&panels, &Style { columns: 3, ..Style::default() }).unwrap();
        assert!(s.contains(r#"width="960" height="480""#));
        assert_eq!(s.matches("<g id=\"panel-").count(), 6);
    }
}
