//! Static SVG charts and the plain-text tables behind them.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new<'a>(points: impl Iterator<Item = &'a (f64, f64)>, y_floor: Option<f64>) -> Frame {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in points.filter(|(a, b)| a.is_finite() && b.is_finite()) {
            x = (x.0.min(*a), x.1.max(*a));
            y = (y.0.min(*b), y.1.max(*b));
        }
        if let Some(f) = y_floor {
            y.0 = y.0.min(f);
        }
        let widen = |r: (f64, f64)| {
            if !r.0.is_finite() {
                (0.0, 1.0)
            } else if r.1 - r.0 <= 0.0 {
                (r.0 - 0.5, r.1 + 0.5)
            } else {
                r
            }
        };
        Frame { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(out: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            f.px(xv),
            y0 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            f.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 18.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
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

/// One polyline per series.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let f = Frame::new(series.iter().flat_map(|s| s.points.iter()), None);
    let mut out = String::new();
    open(&mut out, title, xlabel, ylabel, &f);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (k, (x, y)) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if k == 0 { "M" } else { " L" }, f.px(*x), f.py(*y));
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN,
            MARGIN + 14.0 * i as f64,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical sticks from zero to each `(x, y)`.
pub fn stick_chart(title: &str, xlabel: &str, ylabel: &str, sticks: &[(f64, f64)]) -> String {
    let f = Frame::new(sticks.iter(), Some(0.0));
    let mut out = String::new();
    open(&mut out, title, xlabel, ylabel, &f);
    let base = f.py(0.0);
    for (x, y) in sticks.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
        let px = f.px(*x);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{base:.2}" x2="{px:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"/>"#,
            f.py(*y),
            COLORS[0]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Whitespace-separated table with a `#` header line.
pub fn table(columns: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = format!("# {}\n", columns.join(" "));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| crate::hash::fmt_f64(*x)).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}
