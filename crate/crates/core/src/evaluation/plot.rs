use std::fmt::Write as _;
use std::path::Path;

use super::cv::MetricsReport;
use crate::error::{Error, Result};
use crate::io::write_atomic;

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];
const BAR_WIDTH: f64 = 36.0;
const BAR_GAP: f64 = 12.0;
const PANEL_HEIGHT: f64 = 260.0;
const TOP: f64 = 50.0;
const LEFT: f64 = 50.0;

/// Metric groups of the comparison chart: key, title, accessor.
pub const METRICS: [(&str, &str, fn(&MetricsReport) -> f64); 3] = [
    ("mae", "MAE", |r| r.aggregate.mae),
    ("mse", "MSE", |r| r.aggregate.mse),
    ("accuracy", "Accuracy (%)", |r| r.aggregate.accuracy),
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Bar-label text of a metric value.
pub fn bar_label(value: f64) -> String {
    format!("{value:.4}")
}

/// Grouped bar chart of report aggregates: one group per metric, one bar
/// per report. Each group has its own vertical scale.
pub fn render_comparison_svg(reports: &[MetricsReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("nothing to plot: no reports".into()));
    }
    for r in reports {
        for (key, _, get) in METRICS {
            let v = get(r);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{} {key} is {v}; bars need finite non-negative values",
                    r.model_name
                )));
            }
        }
    }
    let n = reports.len() as f64;
    let panel_inner = n * BAR_WIDTH + (n + 1.0) * BAR_GAP;
    let panel_width = panel_inner.max(140.0) + LEFT;
    let width = METRICS.len() as f64 * panel_width + 20.0;
    let legend_y = TOP + PANEL_HEIGHT + 40.0;
    let height = legend_y + 20.0 * n + 10.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">MAE, MSE and accuracy by model</text>"#,
        width / 2.0
    );

    for (g, (key, title, get)) in METRICS.iter().enumerate() {
        let x0 = 10.0 + g as f64 * panel_width + LEFT;
        let max = reports.iter().map(get).fold(0.0, f64::max);
        let top = if max > 0.0 { max * 1.15 } else { 1.0 };
        let scale = PANEL_HEIGHT / top;
        let base = TOP + PANEL_HEIGHT;
        let _ = writeln!(svg, r#"<g class="metric-group" data-metric="{key}">"#);
        let _ = writeln!(
            svg,
            r#"<text class="group-title" x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            x0 + panel_inner / 2.0,
            TOP - 12.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{TOP}" x2="{x0}" y2="{base}" stroke="#333333"/><line x1="{x0}" y1="{base}" x2="{}" y2="{base}" stroke="#333333"/>"##,
            x0 + panel_inner
        );
        for t in 0..=4 {
            let v = top * t as f64 / 4.0;
            let y = base - v * scale;
            let _ = writeln!(
                svg,
                r##"<text class="tick" x="{}" y="{}" text-anchor="end" fill="#555555">{}</text>"##,
                x0 - 4.0,
                y + 4.0,
                format_tick(v)
            );
        }
        for (i, r) in reports.iter().enumerate() {
            let v = get(r);
            let h = v * scale;
            let x = x0 + BAR_GAP + i as f64 * (BAR_WIDTH + BAR_GAP);
            let model = escape(&r.model_name);
            let _ = writeln!(
                svg,
                r#"<rect class="bar" data-metric="{key}" data-model="{model}" x="{x}" y="{}" width="{BAR_WIDTH}" height="{h}" fill="{}"/>"#,
                base - h,
                PALETTE[i % PALETTE.len()]
            );
            let _ = writeln!(
                svg,
                r#"<text class="bar-label" data-metric="{key}" data-model="{model}" x="{}" y="{}" text-anchor="middle">{}</text>"#,
                x + BAR_WIDTH / 2.0,
                base - h - 4.0,
                bar_label(v)
            );
        }
        let _ = writeln!(svg, "</g>");
    }

    for (i, r) in reports.iter().enumerate() {
        let y = legend_y + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect class="legend-swatch" x="{LEFT}" y="{}" width="12" height="12" fill="{}"/><text class="legend" x="{}" y="{}">{}</text>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            LEFT + 18.0,
            y,
            escape(&r.model_name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(v: f64) -> String {
    if v >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn emit_comparison_plot(reports: &[MetricsReport], path: &Path) -> Result<()> {
    let svg = render_comparison_svg(reports)?;
    write_atomic(path, svg.as_bytes())
}
