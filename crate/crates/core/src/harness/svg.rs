//! Minimal SVG charts: line/scatter plots and heat maps.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Line,
    Points,
    /// Dashed line, for reference curves.
    Dashed,
    /// Piecewise-constant line.
    Step,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: SeriesStyle,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, style: SeriesStyle) -> Self {
        Series {
            label: label.into(),
            points,
            style,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Plot::default()
        }
    }

    pub fn with_series(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn x_range(mut self, lo: f64, hi: f64) -> Self {
        self.x_range = Some((lo, hi));
        self
    }

    pub fn y_range(mut self, lo: f64, hi: f64) -> Self {
        self.y_range = Some((lo, hi));
        self
    }

    fn data_range(&self, pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in self.series.iter().flat_map(|s| s.points.iter()).map(pick) {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            return (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            return (lo - 0.5, hi + 0.5);
        }
        let pad = 0.04 * (hi - lo);
        (lo - pad, hi + pad)
    }

    pub fn render(&self) -> String {
        let (x0, x1) = self.x_range.unwrap_or_else(|| self.data_range(|p| p.0));
        let (y0, y1) = self.y_range.unwrap_or_else(|| self.data_range(|p| p.1));
        let frame = Frame::new(x0, x1, y0, y1);
        let mut out = header(WIDTH, HEIGHT);
        frame.axes(&mut out, &self.title, &self.x_label, &self.y_label);

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| (frame.sx(x), frame.sy(y)))
                .collect();
            match s.style {
                SeriesStyle::Points => {
                    for (x, y) in &pts {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#
                        );
                    }
                }
                SeriesStyle::Line | SeriesStyle::Dashed | SeriesStyle::Step => {
                    let mut d = String::new();
                    for (k, &(x, y)) in pts.iter().enumerate() {
                        if k == 0 {
                            let _ = write!(d, "M{x:.2},{y:.2}");
                        } else if s.style == SeriesStyle::Step {
                            let _ = write!(d, " H{x:.2} V{y:.2}");
                        } else {
                            let _ = write!(d, " L{x:.2},{y:.2}");
                        }
                    }
                    let dash = if s.style == SeriesStyle::Dashed {
                        r#" stroke-dasharray="6,4""#
                    } else {
                        ""
                    };
                    let _ = writeln!(
                        out,
                        r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#
                    );
                }
            }
            let ly = MARGIN_TOP + 14.0 + 18.0 * i as f64;
            let lx = WIDTH - MARGIN_RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<rect x="{lx}" y="{}" width="12" height="4" fill="{color}"/>"#,
                ly - 4.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{ly}" font-size="11">{}</text>"#,
                lx + 18.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Grid of non-negative values drawn as colored cells; `values[row][col]`
/// with row on the vertical axis.
#[derive(Debug, Clone)]
pub struct HeatMap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub values: Vec<Vec<f64>>,
    /// Marker drawn on top, in cell coordinates `(col, row)`.
    pub marker: Option<(f64, f64)>,
}

impl HeatMap {
    pub fn render(&self) -> String {
        let rows = self.values.len().max(1);
        let cols = self.values.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let frame = Frame::new(-0.5, cols as f64 - 0.5, -0.5, rows as f64 - 0.5);
        let mut out = header(WIDTH, HEIGHT);
        let peak = self
            .values
            .iter()
            .flatten()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0f64, f64::max);
        let cw = frame.sx(1.0) - frame.sx(0.0);
        let ch = frame.sy(0.0) - frame.sy(1.0);
        for (r, row) in self.values.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !(v > 0.0) {
                    continue;
                }
                let shade = if peak > 0.0 { v / peak } else { 0.0 };
                let x = frame.sx(c as f64 - 0.5);
                let y = frame.sy(r as f64 + 0.5);
                let _ = writeln!(
                    out,
                    r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>({r}, {c}) {v}</title></rect>"#,
                    cw + 0.2,
                    ch + 0.2,
                    ramp(shade)
                );
            }
        }
        frame.axes(&mut out, &self.title, &self.x_label, &self.y_label);
        if let Some((mx, my)) = self.marker {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="red" stroke="white" stroke-width="1.5"/>"#,
                frame.sx(mx),
                frame.sy(my)
            );
        }
        let lx = WIDTH - MARGIN_RIGHT + 16.0;
        for k in 0..=10 {
            let v = 1.0 - k as f64 / 10.0;
            let y = MARGIN_TOP + 16.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{lx}" y="{y}" width="16" height="16" fill="{}"/>"#,
                ramp(v)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11">max {peak:.4}</text>"#,
            lx + 20.0,
            MARGIN_TOP + 12.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11">0</text>"#,
            lx + 20.0,
            MARGIN_TOP + 172.0
        );
        out.push_str("</svg>\n");
        out
    }
}

pub fn save(svg: &str, path: &Path) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };
        let (y0, y1) = if y1 > y0 { (y0, y1) } else { (y0 - 0.5, y0 + 0.5) };
        Frame { x0, x1, y0, y1 }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        let _ = writeln!(
            out,
            r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            right - left,
            bottom - top
        );
        for t in ticks(self.x0, self.x1) {
            let x = self.sx(t);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{}" stroke="black"/>"#,
                bottom + 4.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
                bottom + 17.0,
                tick_label(t)
            );
        }
        for t in ticks(self.y0, self.y1) {
            let y = self.sy(t);
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/>"#,
                left - 4.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
                left - 7.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            (top + bottom) / 2.0,
            escape(y_label)
        );
    }
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|k| k * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(t: f64) -> String {
    let s = format!("{t:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// White to dark blue.
fn ramp(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(247.0, 8.0),
        lerp(251.0, 48.0),
        lerp(255.0, 107.0)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_cover() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.first(), Some(&0.0));
        assert!((t.last().unwrap() - 1.0).abs() < 1e-12);
        assert!(ticks(-3.2, 47.0).len() <= 7);
    }

    #[test]
    fn plot_renders_every_series() {
        let svg = Plot::new("t", "x", "y<1")
            .with_series(Series::new("a", vec![(0.0, 0.0), (1.0, 1.0)], SeriesStyle::Line))
            .with_series(Series::new("b", vec![(0.5, f64::NAN), (0.2, 0.3)], SeriesStyle::Points))
            .render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<path").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("y&lt;1"));
    }

    #[test]
    fn heat_map_skips_zero_cells() {
        let map = HeatMap {
            title: "h".into(),
            x_label: "m".into(),
            y_label: "n".into(),
            values: vec![vec![0.0, 0.5], vec![1.0, 0.0]],
            marker: Some((0.5, 0.5)),
        };
        let svg = map.render();
        assert_eq!(svg.matches("<title>").count(), 2);
        assert!(svg.contains("fill=\"red\""));
    }
}
