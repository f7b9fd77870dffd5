//! Minimal SVG line plots: curves, shaded bands and scatter markers.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Series {
    Line {
        label: String,
        points: Vec<(f64, f64)>,
        color: String,
        width: f64,
        opacity: f64,
    },
    Band {
        label: String,
        x: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        color: String,
    },
    Scatter {
        label: String,
        points: Vec<(f64, f64)>,
        color: String,
    },
}

impl Series {
    pub fn line(label: &str, points: Vec<(f64, f64)>, color: &str) -> Self {
        Series::Line {
            label: label.into(),
            points,
            color: color.into(),
            width: 2.0,
            opacity: 1.0,
        }
    }

    /// Thin translucent curve, for ensemble members.
    pub fn faint(points: Vec<(f64, f64)>, color: &str) -> Self {
        Series::Line {
            label: String::new(),
            points,
            color: color.into(),
            width: 0.8,
            opacity: 0.25,
        }
    }

    pub fn band(label: &str, x: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>, color: &str) -> Self {
        Series::Band {
            label: label.into(),
            x,
            lo,
            hi,
            color: color.into(),
        }
    }

    pub fn scatter(label: &str, points: Vec<(f64, f64)>, color: &str) -> Self {
        Series::Scatter {
            label: label.into(),
            points,
            color: color.into(),
        }
    }

    fn label(&self) -> &str {
        match self {
            Series::Line { label, .. } | Series::Band { label, .. } | Series::Scatter { label, .. } => label,
        }
    }

    fn color(&self) -> &str {
        match self {
            Series::Line { color, .. } | Series::Band { color, .. } | Series::Scatter { color, .. } => color,
        }
    }

    fn extend_range(&self, xr: &mut Range, yr: &mut Range) {
        match self {
            Series::Line { points, .. } | Series::Scatter { points, .. } => {
                for &(x, y) in points {
                    xr.add(x);
                    yr.add(y);
                }
            }
            Series::Band { x, lo, hi, .. } => {
                x.iter().for_each(|&v| xr.add(v));
                lo.iter().chain(hi).for_each(|&v| yr.add(v));
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn empty() -> Self {
        Range {
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
        }
    }

    fn add(&mut self, v: f64) {
        if v.is_finite() {
            self.lo = self.lo.min(v);
            self.hi = self.hi.max(v);
        }
    }

    fn padded(self) -> Self {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Range { lo: 0.0, hi: 1.0 };
        }
        let span = self.hi - self.lo;
        let pad = if span > 0.0 { 0.05 * span } else { 0.5 * self.lo.abs().max(1.0) };
        Range {
            lo: self.lo - pad,
            hi: self.hi + pad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn push(&mut self, s: Series) -> &mut Self {
        self.series.push(s);
        self
    }

    pub fn render(&self) -> String {
        let mut xr = Range::empty();
        let mut yr = Range::empty();
        for s in &self.series {
            s.extend_range(&mut xr, &mut yr);
        }
        let (xr, yr) = (xr.padded(), yr.padded());
        let sx = |x: f64| MARGIN + (x - xr.lo) / (xr.hi - xr.lo) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - yr.lo) / (yr.hi - yr.lo) * (HEIGHT - 2.0 * MARGIN);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        self.axes(&mut out, xr, yr, &sx, &sy);

        for s in &self.series {
            match s {
                Series::Band { x, lo, hi, color, .. } => {
                    let mut pts: Vec<String> = x.iter().zip(hi).map(|(&a, &b)| coord(sx(a), sy(b))).collect();
                    pts.extend(x.iter().zip(lo).rev().map(|(&a, &b)| coord(sx(a), sy(b))));
                    let _ = writeln!(
                        out,
                        r#"<polygon points="{}" fill="{color}" fill-opacity="0.25" stroke="none"/>"#,
                        pts.join(" ")
                    );
                }
                Series::Line { points, color, width, opacity, .. } => {
                    let pts: Vec<String> = points
                        .iter()
                        .filter(|(a, b)| a.is_finite() && b.is_finite())
                        .map(|&(a, b)| coord(sx(a), sy(b)))
                        .collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" stroke-opacity="{opacity}"/>"#,
                        pts.join(" ")
                    );
                }
                Series::Scatter { points, color, .. } => {
                    for &(a, b) in points.iter().filter(|(a, b)| a.is_finite() && b.is_finite()) {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                            sx(a),
                            sy(b)
                        );
                    }
                }
            }
        }
        self.legend(&mut out);
        out.push_str("</svg>\n");
        out
    }

    fn axes(&self, out: &mut String, xr: Range, yr: Range, sx: &dyn Fn(f64) -> f64, sy: &dyn Fn(f64) -> f64) {
        let (x0, x1) = (MARGIN, WIDTH - MARGIN);
        let (y0, y1) = (HEIGHT - MARGIN, MARGIN);
        let _ = writeln!(
            out,
            r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = xr.lo + t * (xr.hi - xr.lo);
            let yv = yr.lo + t * (yr.hi - yr.lo);
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                sx(xv),
                y0 + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
    }

    fn legend(&self, out: &mut String) {
        let mut y = MARGIN + 8.0;
        let mut seen: Vec<&str> = Vec::new();
        for s in &self.series {
            let label = s.label();
            if label.is_empty() || seen.contains(&label) {
                continue;
            }
            seen.push(label);
            let x = WIDTH - MARGIN - 150.0;
            let _ = writeln!(
                out,
                r#"<rect x="{x}" y="{}" width="12" height="8" fill="{}"/>"#,
                y - 8.0,
                s.color()
            );
            let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 18.0, escape(label));
            y += 16.0;
        }
    }
}

fn coord(x: f64, y: f64) -> String {
    format!("{x:.2},{y:.2}")
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
