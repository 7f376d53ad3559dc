//! Minimal SVG line/scatter plotter: axes, ticks, polylines, points, legend.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Line,
    Scatter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub kind: SeriesKind,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Padded data range; degenerate ranges are widened.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn line(mut self, name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            name: name.into(),
            kind: SeriesKind::Line,
            points,
        });
        self
    }

    pub fn scatter(mut self, name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            name: name.into(),
            kind: SeriesKind::Scatter,
            points,
        });
        self
    }

    /// Draw into the box at `(x0, y0)` of size `w x h`.
    fn draw(&self, out: &mut String, x0: f64, y0: f64, w: f64, h: f64) {
        let (left, right, top, bottom) = (x0 + 58.0, x0 + w - 12.0, y0 + 28.0, y0 + h - 42.0);
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let (xmin, xmax) = range(pts().map(|p| p.0));
        let (ymin, ymax) = range(pts().map(|p| p.1));
        let sx = |x: f64| left + (x - xmin) / (xmax - xmin) * (right - left);
        let sy = |y: f64| bottom - (y - ymin) / (ymax - ymin) * (bottom - top);

        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
            (left + right) / 2.0,
            y0 + 17.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{left:.1}" y1="{bottom:.1}" x2="{right:.1}" y2="{bottom:.1}" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<line x1="{left:.1}" y1="{top:.1}" x2="{left:.1}" y2="{bottom:.1}" stroke="black"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (xmin + f * (xmax - xmin), ymin + f * (ymax - ymin));
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                sx(xv),
                bottom + 14.0,
                fmt_tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
                left - 4.0,
                sy(yv) + 3.0,
                fmt_tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            (left + right) / 2.0,
            bottom + 32.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            x0 + 14.0,
            (top + bottom) / 2.0,
            x0 + 14.0,
            (top + bottom) / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let finite = s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
            match s.kind {
                SeriesKind::Line => {
                    let coords: Vec<String> = finite.map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        coords.join(" ")
                    );
                }
                SeriesKind::Scatter => {
                    for &(x, y) in finite {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="1.8" fill="{color}" fill-opacity="0.6"/>"#,
                            sx(x),
                            sy(y)
                        );
                    }
                }
            }
            if !s.name.is_empty() {
                let ly = top + 4.0 + 13.0 * i as f64;
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.1}" y="{:.1}" width="10" height="8" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
                    right - 110.0,
                    ly,
                    right - 96.0,
                    ly + 8.0,
                    escape(&s.name)
                );
            }
        }
    }

    pub fn render(&self) -> String {
        render_grid(std::slice::from_ref(self), 1)
    }
}

/// Lay `charts` out row-major in `cols` columns.
pub fn render_grid(charts: &[Chart], cols: usize) -> String {
    let (w, h) = (480.0, 320.0);
    let cols = cols.max(1).min(charts.len().max(1));
    let rows = charts.len().div_ceil(cols).max(1);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif">"#,
        w * cols as f64,
        h * rows as f64,
        w * cols as f64,
        h * rows as f64
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, c) in charts.iter().enumerate() {
        c.draw(&mut out, (i % cols) as f64 * w, (i / cols) as f64 * h, w, h);
    }
    out.push_str("</svg>\n");
    out
}
