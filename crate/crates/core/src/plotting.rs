//! Static SVG renderings: return curves with standard-error bands,
//! performance profiles, and interval plots for aggregate statistics.
//!
//! The output is plain hand-assembled SVG text, deterministic for identical
//! inputs.

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 44.0;
const MARGIN_B: f64 = 52.0;

/// One line on a curve plot, with an optional shaded band around it.
#[derive(Clone, Debug)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// (x, low, high) triples for a shaded region, typically mean +/- SE.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

/// One row of an interval plot: a point estimate with an uncertainty range.
#[derive(Clone, Debug)]
pub struct IntervalEntry {
    pub label: String,
    pub value: f64,
    pub low: f64,
    pub high: f64,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_ranges(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        for x in xs {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for y in ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if !x_min.is_finite() {
            x_min = 0.0;
            x_max = 1.0;
        }
        if !y_min.is_finite() {
            y_min = 0.0;
            y_max = 1.0;
        }
        if x_max == x_min {
            x_max = x_min + 1.0;
        }
        if y_max == y_min {
            y_max = y_min + 1.0;
        }
        let pad = 0.05 * (y_max - y_min);
        Frame {
            x_min,
            x_max,
            y_min: y_min - pad,
            y_max: y_max + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.2e}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn svg_header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        title = xml_escape(title),
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut out = String::new();
    let (x0, y0) = (MARGIN_L, HEIGHT - MARGIN_B);
    let (x1, y1) = (WIDTH - MARGIN_R, MARGIN_T);
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for k in 0..=4 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * k as f64 / 4.0;
        let px = frame.px(fx);
        out.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{y0}\" x2=\"{px}\" y2=\"{}\" stroke=\"#cccccc\" stroke-dasharray=\"3 3\"/>\n\
             <text x=\"{px}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            y1,
            y0 + 16.0,
            fmt_tick(fx)
        ));
        let fy = frame.y_min + (frame.y_max - frame.y_min) * k as f64 / 4.0;
        let py = frame.py(fy);
        out.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{py}\" x2=\"{x1}\" y2=\"{py}\" stroke=\"#eeeeee\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            x0 - 6.0,
            py + 4.0,
            fmt_tick(fy)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        xml_escape(y_label)
    ));
    out
}

fn legend(labels: &[String]) -> String {
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = MARGIN_T + 16.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"4\" fill=\"{color}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            WIDTH - MARGIN_R + 10.0,
            y,
            WIDTH - MARGIN_R + 28.0,
            y + 6.0,
            xml_escape(label)
        ));
    }
    out
}

/// Multi-series line plot with optional shaded bands.
pub fn render_curves(title: &str, x_label: &str, y_label: &str, series: &[CurveSeries]) -> String {
    let frame = Frame::from_ranges(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        series.iter().flat_map(|s| {
            s.points
                .iter()
                .map(|p| p.1)
                .chain(s.band.iter().flatten().flat_map(|b| [b.1, b.2]))
        }),
    );
    let mut out = svg_header(title);
    out.push_str(&axes(&frame, x_label, y_label));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(band) = &s.band {
            if band.len() >= 2 {
                let mut d = String::from("M");
                for (x, lo, _) in band {
                    d.push_str(&format!("{:.2},{:.2} L", frame.px(*x), frame.py(*lo)));
                }
                for (x, _, hi) in band.iter().rev() {
                    d.push_str(&format!("{:.2},{:.2} L", frame.px(*x), frame.py(*hi)));
                }
                d.truncate(d.len() - 2);
                d.push('Z');
                out.push_str(&format!(
                    "<path d=\"{d}\" fill=\"{color}\" opacity=\"0.15\" stroke=\"none\"/>\n"
                ));
            }
        }
        if !s.points.is_empty() {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
                .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
                pts.join(" ")
            ));
        }
    }
    out.push_str(&legend(&series.iter().map(|s| s.label.clone()).collect::<Vec<_>>()));
    out.push_str("</svg>\n");
    out
}

/// Horizontal point-and-interval plot, one row per entry.
pub fn render_intervals(title: &str, x_label: &str, entries: &[IntervalEntry]) -> String {
    let frame = Frame::from_ranges(
        entries.iter().flat_map(|e| [e.low, e.high, e.value]),
        (0..entries.len().max(1)).map(|i| i as f64),
    );
    let mut out = svg_header(title);
    let rows = entries.len().max(1) as f64;
    let row_h = (HEIGHT - MARGIN_T - MARGIN_B) / rows;
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{}\" x2=\"{x1}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        HEIGHT - MARGIN_B
    ));
    for k in 0..=4 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * k as f64 / 4.0;
        let px = frame.px(fx);
        out.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{px}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_T,
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 16.0,
            fmt_tick(fx)
        ));
    }
    for (i, e) in entries.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = MARGIN_T + row_h * (i as f64 + 0.5);
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"3\" opacity=\"0.5\"/>\n\
             <circle cx=\"{:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"{color}\"/>\n\
             <text x=\"{:.2}\" y=\"{y:.2}\" font-size=\"11\" text-anchor=\"end\" dy=\"4\">{}</text>\n",
            frame.px(e.low),
            frame.px(e.high),
            frame.px(e.value),
            MARGIN_L - 8.0,
            xml_escape(&e.label)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        xml_escape(x_label)
    ));
    out.push_str("</svg>\n");
    out
}
