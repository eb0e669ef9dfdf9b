//! Self-contained SVG fan charts. The renderer is a pure function of its
//! inputs: no timestamps, no randomness, fixed 3-decimal coordinates, so
//! identical inputs produce identical bytes.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const MAIN_HEIGHT: f64 = 420.0;
const TIMING_HEIGHT: f64 = 150.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 44.0;
/// Vertical gap between the main panel and the timing subplot.
const PANEL_GAP: f64 = 34.0;

const BAND_FILL: &str = "#a6bddb";
const MEDIAN_STROKE: &str = "#045a8d";
const TRUTH_STROKE: &str = "#d7301f";
const TIMING_STROKE: &str = "#2c7a2c";
const AXIS_STROKE: &str = "#444444";

/// Inputs for one fan chart. `truth`, `median`, `lo`, and `hi` are aligned
/// per horizon step and equally long; `timing` is an optional
/// (step, density) curve drawn as a subplot.
pub struct FanChart<'a> {
    pub title: &'a str,
    pub truth: &'a [f64],
    pub median: &'a [f64],
    pub lo: &'a [f64],
    pub hi: &'a [f64],
    pub timing: Option<&'a [(f64, f64)]>,
}

/// Affine map from a data interval onto a pixel interval.
struct Scale {
    d_lo: f64,
    d_span: f64,
    p_lo: f64,
    p_span: f64,
}

impl Scale {
    fn new(d_lo: f64, d_hi: f64, p_lo: f64, p_hi: f64) -> Scale {
        let d_span = if d_hi > d_lo { d_hi - d_lo } else { 1.0 };
        Scale {
            d_lo,
            d_span,
            p_lo,
            p_span: p_hi - p_lo,
        }
    }

    fn map(&self, x: f64) -> f64 {
        self.p_lo + (x - self.d_lo) / self.d_span * self.p_span
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

fn polyline_points(xs: &Scale, ys: &Scale, series: &[f64]) -> String {
    let mut out = String::with_capacity(series.len() * 16);
    for (k, &v) in series.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{},{}", fmt(xs.map(k as f64)), fmt(ys.map(v)));
    }
    out
}

/// Band outline: the upper curve left to right, then the lower curve right
/// to left. Exactly `2 * len` vertices.
fn band_points(xs: &Scale, ys: &Scale, lo: &[f64], hi: &[f64]) -> String {
    let mut out = String::with_capacity(lo.len() * 32);
    for (k, &v) in hi.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{},{}", fmt(xs.map(k as f64)), fmt(ys.map(v)));
    }
    for (k, &v) in lo.iter().enumerate().rev() {
        let _ = write!(out, " {},{}", fmt(xs.map(k as f64)), fmt(ys.map(v)));
    }
    out
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Evenly spaced tick positions over `[lo, hi]`, endpoints included.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn axis(out: &mut String, xs: &Scale, ys: &Scale, x_hi: f64, y_lo: f64, y_hi: f64) {
    let px_lo = xs.p_lo;
    let px_hi = xs.p_lo + xs.p_span;
    let py_lo = ys.map(y_lo);
    let py_hi = ys.map(y_hi);
    let _ = write!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{AXIS_STROKE}\" stroke-width=\"1\"/>\n",
        fmt(px_lo), fmt(py_lo), fmt(px_hi), fmt(py_lo)
    );
    let _ = write!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{AXIS_STROKE}\" stroke-width=\"1\"/>\n",
        fmt(px_lo), fmt(py_lo), fmt(px_lo), fmt(py_hi)
    );
    for t in ticks(0.0, x_hi, 5) {
        let x = xs.map(t);
        let _ = write!(
            out,
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"{AXIS_STROKE}\" stroke-width=\"1\"/>\n",
            fmt(x), fmt(py_lo), fmt(py_lo + 4.0)
        );
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(x), fmt(py_lo + 16.0), t.round() as i64
        );
    }
    for t in ticks(y_lo, y_hi, 5) {
        let y = ys.map(t);
        let _ = write!(
            out,
            "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"{AXIS_STROKE}\" stroke-width=\"1\"/>\n",
            fmt(px_lo - 4.0), fmt(px_lo), fmt(y)
        );
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            fmt(px_lo - 7.0), fmt(y + 3.5), fmt(t)
        );
    }
}

/// Renders the chart to a complete SVG document.
pub fn render(chart: &FanChart) -> String {
    let p_h = chart.median.len();
    assert!(p_h > 0, "fan chart needs at least one horizon step");
    assert!(
        chart.truth.len() == p_h && chart.lo.len() == p_h && chart.hi.len() == p_h,
        "fan chart series must be aligned"
    );

    let has_timing = chart.timing.is_some();
    let height = if has_timing {
        MARGIN_TOP + MAIN_HEIGHT + PANEL_GAP + TIMING_HEIGHT + MARGIN_BOTTOM
    } else {
        MARGIN_TOP + MAIN_HEIGHT + MARGIN_BOTTOM
    };

    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for series in [chart.truth, chart.median, chart.lo, chart.hi] {
        for &v in series {
            y_lo = y_lo.min(v);
            y_hi = y_hi.max(v);
        }
    }
    let pad = 0.05 * (y_hi - y_lo).max(1e-12);
    y_lo -= pad;
    y_hi += pad;

    let x_hi = (p_h - 1).max(1) as f64;
    let xs = Scale::new(0.0, x_hi, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let ys = Scale::new(y_lo, y_hi, MARGIN_TOP + MAIN_HEIGHT, MARGIN_TOP);

    let mut out = String::with_capacity(1 << 16);
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\">\n",
        fmt(WIDTH), fmt(height), fmt(WIDTH), fmt(height)
    );
    let _ = write!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        fmt(WIDTH), fmt(height)
    );
    let _ = write!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        fmt(WIDTH / 2.0), fmt(MARGIN_TOP - 10.0), escape(chart.title)
    );

    let _ = write!(
        out,
        "<polygon id=\"band\" points=\"{}\" fill=\"{BAND_FILL}\" fill-opacity=\"0.65\" stroke=\"none\"/>\n",
        band_points(&xs, &ys, chart.lo, chart.hi)
    );
    let _ = write!(
        out,
        "<polyline id=\"median\" points=\"{}\" fill=\"none\" stroke=\"{MEDIAN_STROKE}\" stroke-width=\"1.5\"/>\n",
        polyline_points(&xs, &ys, chart.median)
    );
    let _ = write!(
        out,
        "<polyline id=\"truth\" points=\"{}\" fill=\"none\" stroke=\"{TRUTH_STROKE}\" stroke-width=\"1.2\"/>\n",
        polyline_points(&xs, &ys, chart.truth)
    );
    axis(&mut out, &xs, &ys, x_hi, y_lo, y_hi);
    legend(&mut out);

    if let Some(timing) = chart.timing {
        timing_panel(&mut out, timing, x_hi);
    }

    out.push_str("</svg>\n");
    out
}

fn legend(out: &mut String) {
    let x = WIDTH - MARGIN_RIGHT - 190.0;
    let y = MARGIN_TOP + 12.0;
    let entries = [
        (TRUTH_STROKE, "truth"),
        (MEDIAN_STROKE, "median forecast"),
        (BAND_FILL, "2.5-97.5% band"),
    ];
    for (i, (color, label)) in entries.iter().enumerate() {
        let ly = y + 16.0 * i as f64;
        let _ = write!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"4\" fill=\"{color}\"/>\n",
            fmt(x), fmt(ly - 4.0)
        );
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            fmt(x + 20.0), fmt(ly), escape(label)
        );
    }
}

fn timing_panel(out: &mut String, timing: &[(f64, f64)], x_hi: f64) {
    let top = MARGIN_TOP + MAIN_HEIGHT + PANEL_GAP;
    let xs = Scale::new(0.0, x_hi, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let mut d_hi = f64::NEG_INFINITY;
    for &(_, p) in timing {
        d_hi = d_hi.max(p);
    }
    if !(d_hi > 0.0) {
        d_hi = 1.0;
    }
    let ys = Scale::new(0.0, d_hi * 1.05, top + TIMING_HEIGHT, top);

    let _ = write!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">event timing density</text>\n",
        fmt(MARGIN_LEFT), fmt(top - 8.0)
    );
    let mut points = String::with_capacity(timing.len() * 16);
    for (i, &(t, p)) in timing.iter().enumerate() {
        if i > 0 {
            points.push(' ');
        }
        let _ = write!(points, "{},{}", fmt(xs.map(t)), fmt(ys.map(p)));
    }
    let _ = write!(
        out,
        "<polyline id=\"timing\" points=\"{points}\" fill=\"none\" stroke=\"{TIMING_STROKE}\" stroke-width=\"1.2\"/>\n"
    );
    let base = ys.map(0.0);
    let _ = write!(
        out,
        "<line x1=\"{}\" y1=\"{base_s}\" x2=\"{}\" y2=\"{base_s}\" stroke=\"{AXIS_STROKE}\" stroke-width=\"1\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(WIDTH - MARGIN_RIGHT),
        base_s = fmt(base)
    );
}
