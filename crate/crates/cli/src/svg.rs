//! Minimal self-contained SVG charts: lines, scatter and heatmaps.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn solid(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            dashed: true,
        }
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        (lo - pad, hi + pad)
    }
}

/// A rectangular plotting frame with linear axes.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    top: f64,
    height: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y.0) / (self.y.1 - self.y.0) * self.height
    }

    fn axes(&self, out: &mut String, x_label: Option<&str>, y_label: &str) {
        let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let bottom = self.top + self.height;
        let _ = writeln!(
            out,
            r#"<rect x="{left}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            self.top,
            right - left,
            self.height
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                self.px(xv),
                bottom + 14.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
                left - 4.0,
                self.py(yv) + 3.0,
                tick(yv)
            );
        }
        if let Some(label) = x_label {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
                (left + right) / 2.0,
                bottom + 32.0,
                escape(label)
            );
        }
        let mid = self.top + self.height / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="14" y="{mid:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {mid:.1})">{}</text>"#,
            escape(y_label)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn open(height: f64, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    out
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str, dashed: bool) {
    // break the line at non-finite values
    for run in points.split(|p| !(p.0.is_finite() && p.1.is_finite())) {
        if run.len() < 2 {
            continue;
        }
        let coords: Vec<String> = run
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let dash = if dashed {
            r#" stroke-dasharray="5,4""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            coords.join(" ")
        );
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame {
        x: bounds(series.iter().flat_map(|s| s.points.iter().map(|p| &p.0))),
        y: bounds(series.iter().flat_map(|s| s.points.iter().map(|p| &p.1))),
        top: MARGIN_TOP,
        height: HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
    };
    let mut out = open(HEIGHT, title);
    frame.axes(&mut out, Some(x_label), y_label);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut out, &frame, &s.points, color, s.dashed);
        let ly = MARGIN_TOP + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="10" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN_RIGHT - 6.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn scatter_chart(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let frame = Frame {
        x: bounds(points.iter().map(|p| &p.0)),
        y: bounds(points.iter().map(|p| &p.1)),
        top: MARGIN_TOP,
        height: HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
    };
    let mut out = open(HEIGHT, title);
    frame.axes(&mut out, Some(x_label), y_label);
    for &(x, y) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="{}"/>"#,
            frame.px(x),
            frame.py(y),
            PALETTE[0]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertically stacked line panels sharing the x axis.
pub fn stacked_chart(title: &str, x_label: &str, panels: &[(String, Vec<(f64, f64)>)]) -> String {
    let panel_height = 130.0;
    let gap = 18.0;
    let total = MARGIN_TOP + panels.len() as f64 * (panel_height + gap) + MARGIN_BOTTOM;
    let x = bounds(panels.iter().flat_map(|p| p.1.iter().map(|q| &q.0)));
    let mut out = open(total, title);
    for (i, (label, points)) in panels.iter().enumerate() {
        let frame = Frame {
            x,
            y: bounds(points.iter().map(|p| &p.1)),
            top: MARGIN_TOP + i as f64 * (panel_height + gap),
            height: panel_height,
        };
        let last = i + 1 == panels.len();
        frame.axes(&mut out, last.then_some(x_label), label);
        polyline(&mut out, &frame, points, PALETTE[i % PALETTE.len()], false);
    }
    out.push_str("</svg>\n");
    out
}

/// Blue-to-red color for `t ∈ [0, 1]`.
fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t) as u8;
    let b = (255.0 * (1.0 - t)) as u8;
    let g = (255.0 * (1.0 - (2.0 * t - 1.0).abs()) * 0.8) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Cells `grid[row][col]` with rows along y. Non-finite cells are left blank.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    x: (f64, f64),
    y: (f64, f64),
    grid: &[Vec<f64>],
) -> String {
    let frame = Frame {
        x,
        y,
        top: MARGIN_TOP,
        height: HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
    };
    let mut out = open(HEIGHT, title);
    let (lo, hi) = bounds(grid.iter().flatten());
    let rows = grid.len().max(1);
    let cell_h = frame.height / rows as f64;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    for (r, row) in grid.iter().enumerate() {
        let cell_w = plot_w / row.len().max(1) as f64;
        for (c, v) in row.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN_LEFT + c as f64 * cell_w,
                frame.top + frame.height - (r + 1) as f64 * cell_h,
                cell_w + 0.05,
                cell_h + 0.05,
                color((v - lo) / (hi - lo))
            );
        }
    }
    frame.axes(&mut out, Some(x_label), y_label);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">range {} to {}</text>"#,
        WIDTH - MARGIN_RIGHT,
        MARGIN_TOP - 4.0,
        tick(lo),
        tick(hi)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let line = line_chart(
            "t",
            "x",
            "y",
            &[Series::solid("a", vec![(0.0, 1.0), (1.0, 2.0)])],
        );
        assert!(line.starts_with("<svg") && line.trim_end().ends_with("</svg>"));
        assert!(line.contains("<polyline"));
        let flat = scatter_chart("s", "x", "y", &[(1.0, 1.0), (1.0, 1.0)]);
        assert!(flat.contains("<circle"));
        let map = heatmap(
            "h",
            "x",
            "y",
            (0.0, 1.0),
            (0.0, 1.0),
            &[vec![0.0, f64::NAN], vec![1.0, 2.0]],
        );
        assert_eq!(map.matches("<rect x=").count(), 3 + 1);
        let panels = stacked_chart(
            "p",
            "t",
            &[
                ("v".into(), vec![(0.0, 1.0), (1.0, 0.5)]),
                ("w".into(), vec![]),
            ],
        );
        assert_eq!(panels.matches("<polyline").count(), 1);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = line_chart("a<b & c", "x", "y", &[]);
        assert!(svg.contains("a&lt;b &amp; c"));
    }
}
