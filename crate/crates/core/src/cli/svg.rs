//! Minimal SVG charts: scatter or line series on linear or log axes.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Style {
    Markers,
    Line,
    Bars,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error bars, same length as `points` when present.
    pub errors: Option<Vec<f64>>,
    pub style: Style,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>, style: Style) -> Self {
        Self { label: label.to_string(), points, errors: None, style }
    }

    pub fn with_errors(mut self, errors: Vec<f64>) -> Self {
        self.errors = Some(errors);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
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
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        let pad = 0.05 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad, log }
    }

    fn frac(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 8 + 1).max(1);
            return (a..=b).step_by(step as usize).map(|e| (10f64.powi(e), format!("1e{e}"))).collect();
        }
        let span = self.hi - self.lo;
        let raw = span / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 7.0).unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi {
            out.push((t, format!("{}", (t / step).round() * step)));
            t += step;
        }
        out
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(chart: &Chart) -> String {
    let xs = chart.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let x = Axis::fit(xs, chart.log_x);
    let ys = chart.series.iter().flat_map(|s| {
        let errs = s.errors.clone().unwrap_or_else(|| vec![0.0; s.points.len()]);
        s.points
            .iter()
            .zip(errs)
            .flat_map(|(p, e)| [p.1 - e, p.1 + e, p.1])
            .collect::<Vec<_>>()
    });
    let mut y = Axis::fit(ys, chart.log_y);
    if !chart.log_y && chart.series.iter().any(|s| s.style == Style::Bars) {
        y.lo = y.lo.min(0.0);
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |v: f64| x.frac(v).map(|f| LEFT + f * pw);
    let py = |v: f64| y.frac(v).map(|f| TOP + (1.0 - f) * ph);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(&chart.title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (v, label) in x.ticks() {
        if let Some(cx) = px(v) {
            let _ = writeln!(s, r#"<line x1="{cx:.1}" y1="{}" x2="{cx:.1}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{cx:.1}" y="{}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
        }
    }
    for (v, label) in y.ticks() {
        if let Some(cy) = py(v) {
            let _ = writeln!(s, r#"<line x1="{}" y1="{cy:.1}" x2="{LEFT}" y2="{cy:.1}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#, LEFT - 8.0, cy + 4.0);
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(&chart.x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        esc(&chart.y_label)
    );

    for (k, ser) in chart.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(usize, f64, f64)> = ser
            .points
            .iter()
            .enumerate()
            .filter_map(|(i, &(a, b))| Some((i, px(a)?, py(b)?)))
            .collect();
        match ser.style {
            Style::Line => {
                let path: Vec<String> = pts.iter().map(|(_, a, b)| format!("{a:.1},{b:.1}")).collect();
                if !path.is_empty() {
                    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
                }
            }
            Style::Markers => {
                for &(i, a, b) in &pts {
                    if let Some(e) = ser.errors.as_ref().map(|e| e[i]).filter(|e| *e > 0.0) {
                        let (p, q) = (ser.points[i].1 - e, ser.points[i].1 + e);
                        if let (Some(y1), Some(y2)) = (py(p).or(Some(TOP + ph)), py(q)) {
                            let _ = writeln!(s, r#"<line x1="{a:.1}" y1="{y1:.1}" x2="{a:.1}" y2="{y2:.1}" stroke="{color}"/>"#);
                        }
                    }
                    let _ = writeln!(s, r#"<circle cx="{a:.1}" cy="{b:.1}" r="3" fill="{color}"/>"#);
                }
            }
            Style::Bars => {
                let n = ser.points.len().max(1) as f64;
                let bw = (pw / n * 0.8).max(1.0);
                let base = py(y.lo.max(0.0)).unwrap_or(TOP + ph).min(TOP + ph);
                for &(_, a, b) in &pts {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.1}" y="{:.1}" width="{bw:.1}" height="{:.1}" fill="{color}" fill-opacity="0.6"/>"#,
                        a - bw / 2.0,
                        b.min(base),
                        (base - b).abs()
                    );
                }
            }
        }
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, LEFT + 10.0, ly - 9.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, LEFT + 26.0, esc(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_point() {
        let c = Chart {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
            series: vec![Series::new("s", vec![(1e-4, 0.01), (1e-3, 0.03), (0.0, 1.0)], Style::Markers)],
        };
        let svg = render(&c);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        // the point at x = 0 has no place on a log axis
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
