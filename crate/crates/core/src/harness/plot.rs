//! Static SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::report::{read_steps_csv, StepRecord};
use crate::error::{Error, Result};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub(crate) struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub(crate) struct Axes {
    pub x_label: &'static str,
    pub y_label: &'static str,
    /// Pins the top of the y range (PoF never exceeds 1).
    pub y_max: Option<f64>,
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi)
    }
}

/// One polyline per series plus a legend.
pub(crate) fn render_svg(series: &[Series], axes: &Axes) -> Result<String> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if series.is_empty() || all.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
        all.iter().map(pick).fold(init, f)
    };
    let (x_lo, x_hi) = (fold(f64::min, f64::INFINITY, |p| p.0), fold(f64::max, f64::NEG_INFINITY, |p| p.0));
    let mut y_lo = fold(f64::min, f64::INFINITY, |p| p.1);
    let mut y_hi = fold(f64::max, f64::NEG_INFINITY, |p| p.1);
    if let Some(top) = axes.y_max {
        y_hi = top;
        y_lo = y_lo.min(top);
    }
    let (x_lo, x_hi) = if x_hi > x_lo { (x_lo, x_hi) } else { (x_lo - 1.0, x_hi + 1.0) };
    let (y_lo, y_hi) = nice_range(y_lo, y_hi);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    for k in 0..=4 {
        let y = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py + 4.0,
            fmt_tick(y)
        );
    }
    for k in 0..=4 {
        let x = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(x),
            TOP + plot_h + 18.0,
            fmt_tick(x)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        axes.x_label
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        axes.y_label
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// PoF against step, one line per solver, averaged over seeds.
pub fn render_pof_svg(records: &[StepRecord]) -> Result<String> {
    let mut order: Vec<&str> = Vec::new();
    let mut acc: BTreeMap<(&str, usize), (f64, usize)> = BTreeMap::new();
    for r in records {
        if !order.contains(&r.solver.as_str()) {
            order.push(&r.solver);
        }
        let e = acc.entry((&r.solver, r.t)).or_insert((0.0, 0));
        e.0 += r.pof;
        e.1 += 1;
    }
    let series: Vec<Series> = order
        .iter()
        .map(|&name| Series {
            name: name.to_string(),
            points: acc
                .range((name, 0)..=(name, usize::MAX))
                .map(|(&(_, t), &(sum, n))| (t as f64, sum / n as f64))
                .collect(),
        })
        .collect();
    render_svg(
        &series,
        &Axes {
            x_label: "time step",
            y_label: "PoF",
            y_max: Some(1.0),
        },
    )
}

/// Reads `steps_csv` and writes the chart to `svg_path`. Nothing is
/// written when the input has no rows.
pub fn plot_steps(steps_csv: impl AsRef<Path>, svg_path: impl AsRef<Path>) -> Result<()> {
    let records = read_steps_csv(steps_csv)?;
    let svg = render_pof_svg(&records)?;
    std::fs::write(svg_path, svg)?;
    Ok(())
}
