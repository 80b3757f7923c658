//! Deterministic SVG rendering for run artifacts.
//!
//! Identical specs must produce byte-identical files, so every coordinate is
//! formatted with fixed precision and series are rendered in declaration
//! order. Scatter series emit one `<circle>` per point, line series one
//! `<polyline>` each; the trajectory overlay adds an endpoint marker per
//! series.

use std::path::Path;

use crate::CliError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const TICKS: usize = 5;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Scatter,
    MultiLine,
    TrajectoryOverlay,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Renders the spec to an SVG document string.
pub fn render_svg(spec: &PlotSpec) -> Result<String, CliError> {
    for series in &spec.series {
        for p in &series.points {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(CliError::Runtime(format!(
                    "non-finite coordinate in series `{}`",
                    series.label
                )));
            }
        }
    }

    let (x_range, y_range) = data_ranges(&spec.series);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        escape(&spec.title)
    ));

    render_axes(&mut svg, x_range, y_range, &spec.x_label, &spec.y_label);

    for (i, series) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match spec.kind {
            PlotKind::Scatter => render_markers(&mut svg, series, color, x_range, y_range, 3.0),
            PlotKind::MultiLine => render_polyline(&mut svg, series, color, x_range, y_range),
            PlotKind::TrajectoryOverlay => {
                render_polyline(&mut svg, series, color, x_range, y_range);
                if let Some(last) = series.points.last() {
                    let (cx, cy) = to_pixel(*last, x_range, y_range);
                    svg.push_str(&format!(
                        "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"4\" fill=\"{color}\"/>\n"
                    ));
                }
            }
        }
    }

    render_legend(&mut svg, spec);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders the spec and writes it to `path`.
pub fn emit_plot(spec: &PlotSpec, path: &Path) -> Result<(), CliError> {
    let svg = render_svg(spec)?;
    std::fs::write(path, svg)
        .map_err(|e| CliError::Runtime(format!("cannot write plot {}: {e}", path.display())))
}

fn data_ranges(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for p in &s.points {
            xs = (xs.0.min(p[0]), xs.1.max(p[0]));
            ys = (ys.0.min(p[1]), ys.1.max(p[1]));
        }
    }
    (pad_range(xs), pad_range(ys))
}

/// Expands the raw bounds by 5%; empty or single-valued data falls back to a
/// unit span so the axes stay drawable.
fn pad_range((lo, hi): (f64, f64)) -> (f64, f64) {
    if lo > hi {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span == 0.0 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn to_pixel(p: [f64; 2], x_range: (f64, f64), y_range: (f64, f64)) -> (f64, f64) {
    let fx = (p[0] - x_range.0) / (x_range.1 - x_range.0);
    let fy = (p[1] - y_range.0) / (y_range.1 - y_range.0);
    let px = MARGIN_LEFT + fx * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
    let py = HEIGHT - MARGIN_BOTTOM - fy * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
    (px, py)
}

fn render_axes(
    svg: &mut String,
    x_range: (f64, f64),
    y_range: (f64, f64),
    x_label: &str,
    y_label: &str,
) {
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>\n"
    ));
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let xv = x_range.0 + f * (x_range.1 - x_range.0);
        let yv = y_range.0 + f * (y_range.1 - y_range.0);
        let px = x0 + f * (x1 - x0);
        let py = y0 - f * (y0 - y1);
        svg.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{y0:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{}</text>\n",
            y0 + 20.0,
            format_tick(xv)
        ));
        svg.push_str(&format!(
            "<line x1=\"{x0:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"black\"/>\n",
            x0 - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\" \
             font-family=\"sans-serif\">{}</text>\n",
            x0 - 9.0,
            py + 4.0,
            format_tick(yv)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" transform=\"rotate(-90 18 {:.2})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    ));
}

fn render_markers(
    svg: &mut String,
    series: &Series,
    color: &str,
    x_range: (f64, f64),
    y_range: (f64, f64),
    radius: f64,
) {
    for p in &series.points {
        let (cx, cy) = to_pixel(*p, x_range, y_range);
        svg.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{radius}\" fill=\"{color}\" \
             fill-opacity=\"0.7\"/>\n"
        ));
    }
}

fn render_polyline(
    svg: &mut String,
    series: &Series,
    color: &str,
    x_range: (f64, f64),
    y_range: (f64, f64),
) {
    let mut coords = String::new();
    for p in &series.points {
        let (px, py) = to_pixel(*p, x_range, y_range);
        coords.push_str(&format!("{px:.2},{py:.2} "));
    }
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
        coords.trim_end()
    ));
}

fn render_legend(svg: &mut String, spec: &PlotSpec) {
    let x = WIDTH - MARGIN_RIGHT + 14.0;
    for (i, series) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = MARGIN_TOP + 8.0 + 20.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            y - 10.0
        ));
        svg.push_str(&format!(
            "<text class=\"legend\" x=\"{:.2}\" y=\"{y:.2}\" font-size=\"12\" \
             font-family=\"sans-serif\">{}</text>\n",
            x + 18.0,
            escape(&series.label)
        ));
    }
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
