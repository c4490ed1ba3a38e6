//! Minimal native SVG line plots.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Dashed,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Symmetric error bars, drawn as a shaded band for lines and as
    /// whiskers for markers.
    pub err: Option<Vec<f64>>,
    pub style: Style,
    /// Index into the palette; series sharing a color belong together.
    pub color: usize,
}

impl Series {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>, style: Style, color: usize) -> Self {
        Self {
            label: label.into(),
            x,
            y,
            err: None,
            style,
            color,
        }
    }

    pub fn with_err(mut self, err: Vec<f64>) -> Self {
        self.err = Some(err);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    pixel_lo: f64,
    pixel_hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool, pixel_lo: f64, pixel_hi: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
            lo -= pad;
            hi += pad;
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis {
            lo,
            hi,
            log,
            pixel_lo,
            pixel_hi,
        }
    }

    fn map(&self, v: f64) -> Option<f64> {
        let v = if self.log { v.log10() } else { v };
        v.is_finite()
            .then(|| self.pixel_lo + (v - self.lo) / (self.hi - self.lo) * (self.pixel_hi - self.pixel_lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 6).max(1);
            return (a..=b)
                .step_by(step as usize)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect();
        }
        let raw = (self.hi - self.lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-9 * step {
            let v = if t.abs() < 1e-12 * step { 0.0 } else { t };
            out.push((v, format_tick(v)));
            t += step;
        }
        out
    }
}

fn format_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, s: Series) {
        self.series.push(s);
    }

    pub fn render(&self) -> String {
        let plot_right = WIDTH - MARGIN_RIGHT;
        let plot_bottom = HEIGHT - MARGIN_BOTTOM;
        let xs = self.series.iter().flat_map(|s| s.x.iter().copied());
        let ys = self.series.iter().flat_map(|s| {
            let err = s.err.clone().unwrap_or_else(|| vec![0.0; s.y.len()]);
            s.y.iter()
                .zip(err)
                .flat_map(|(y, e)| [y - e, y + e])
                .filter(|v| !self.log_y || *v > 0.0)
                .collect::<Vec<_>>()
        });
        let xa = Axis::fit(xs, self.log_x, MARGIN_LEFT, plot_right);
        let ya = Axis::fit(ys, self.log_y, plot_bottom, MARGIN_TOP);

        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(o, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            o,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            (MARGIN_LEFT + plot_right) / 2.0,
            escape(&self.title)
        );
        for (v, label) in xa.ticks() {
            if let Some(px) = xa.map(v) {
                let _ = writeln!(
                    o,
                    r##"<line x1="{px:.2}" y1="{MARGIN_TOP}" x2="{px:.2}" y2="{plot_bottom}" stroke="#e6e6e6"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                    plot_bottom + 16.0,
                    escape(&label)
                );
            }
        }
        for (v, label) in ya.ticks() {
            if let Some(py) = ya.map(v) {
                let _ = writeln!(
                    o,
                    r##"<line x1="{MARGIN_LEFT}" y1="{py:.2}" x2="{plot_right}" y2="{py:.2}" stroke="#e6e6e6"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                    MARGIN_LEFT - 6.0,
                    py + 4.0,
                    escape(&label)
                );
            }
        }
        let _ = writeln!(
            o,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            plot_right - MARGIN_LEFT,
            plot_bottom - MARGIN_TOP
        );
        let _ = writeln!(
            o,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (MARGIN_LEFT + plot_right) / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            o,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (MARGIN_TOP + plot_bottom) / 2.0,
            (MARGIN_TOP + plot_bottom) / 2.0,
            escape(&self.y_label)
        );

        for s in &self.series {
            let color = PALETTE[s.color % PALETTE.len()];
            let pts: Vec<(usize, f64, f64)> = s
                .x
                .iter()
                .zip(&s.y)
                .enumerate()
                .filter_map(|(i, (&x, &y))| Some((i, xa.map(x)?, ya.map(y)?)))
                .collect();
            if let (Some(err), Style::Line | Style::Dashed) = (&s.err, s.style) {
                let mut upper = Vec::new();
                let mut lower = Vec::new();
                for (i, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
                    if let (Some(px), Some(hi), Some(lo)) = (xa.map(x), ya.map(y + err[i]), ya.map(y - err[i])) {
                        upper.push(format!("{px:.2},{hi:.2}"));
                        lower.push(format!("{px:.2},{lo:.2}"));
                    }
                }
                lower.reverse();
                if !upper.is_empty() {
                    let _ = writeln!(
                        o,
                        r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                        upper.join(" "),
                        lower.join(" ")
                    );
                }
            }
            match s.style {
                Style::Line | Style::Dashed => {
                    let path: Vec<String> = pts.iter().map(|(_, x, y)| format!("{x:.2},{y:.2}")).collect();
                    let dash = if s.style == Style::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        o,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
                        path.join(" ")
                    );
                }
                Style::Markers => {
                    for &(i, x, y) in &pts {
                        if let Some(err) = &s.err {
                            let yv = s.y[i];
                            if let (Some(hi), Some(lo)) = (ya.map(yv + err[i]), ya.map(yv - err[i])) {
                                let _ = writeln!(
                                    o,
                                    r#"<line x1="{x:.2}" y1="{hi:.2}" x2="{x:.2}" y2="{lo:.2}" stroke="{color}"/>"#
                                );
                            }
                        }
                        let _ = writeln!(o, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                    }
                }
            }
        }

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[s.color % PALETTE.len()];
            let y = MARGIN_TOP + 10.0 + 18.0 * i as f64;
            let x = plot_right + 12.0;
            match s.style {
                Style::Markers => {
                    let _ = writeln!(o, r#"<circle cx="{:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#, x + 10.0);
                }
                _ => {
                    let dash = if s.style == Style::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        o,
                        r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="1.6"{dash}/>"#,
                        x + 20.0
                    );
                }
            }
            let _ = writeln!(
                o,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                x + 26.0,
                y + 4.0,
                escape(&s.label)
            );
        }
        o.push_str("</svg>\n");
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_series_and_skips_nonpositive_on_log_axes() {
        let mut p = Plot::new("t < 1 & more", "t", "S");
        p.log_y = true;
        p.push(Series::new("sim", vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 10.0], Style::Line, 0).with_err(vec![0.1; 3]));
        p.push(Series::new("theory", vec![0.0, 2.0], vec![1.0, 10.0], Style::Dashed, 1));
        p.push(Series::new("pts", vec![1.0], vec![5.0], Style::Markers, 2).with_err(vec![1.0]));
        let svg = p.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("t &lt; 1 &amp; more"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn flat_and_empty_data_still_render() {
        let mut p = Plot::new("flat", "x", "y");
        p.push(Series::new("c", vec![1.0, 2.0], vec![3.0, 3.0], Style::Line, 0));
        assert!(!p.render().contains("NaN"));
        assert!(Plot::new("empty", "x", "y").render().contains("</svg>"));
    }
}
