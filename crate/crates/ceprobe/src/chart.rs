//! Static SVG bar charts: one grouped chart per aggregate metric and a
//! paired frequency/magnitude chart per class. Pure string generation with
//! fixed geometry, so identical reports yield identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::augment::Method;
use crate::diagnostics::FrequencyMagnitude;
use crate::error::Result;
use crate::experiment::{hex_digest, CellOutcome, DiagnosticsReport};
use crate::report::ManifestEntry;

pub const CHART_WIDTH: f64 = 720.0;
pub const CHART_HEIGHT: f64 = 420.0;
pub const MARGIN_LEFT: f64 = 70.0;
pub const MARGIN_RIGHT: f64 = 70.0;
pub const MARGIN_TOP: f64 = 60.0;
pub const MARGIN_BOTTOM: f64 = 60.0;
pub const PLOT_WIDTH: f64 = CHART_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
pub const PLOT_HEIGHT: f64 = CHART_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc949", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac",
];

/// Height in pixels of a bar with `value` on a scale reaching `y_max`.
pub fn bar_height(value: f64, y_max: f64) -> f64 {
    if !(y_max > 0.0) || !(value > 0.0) {
        return 0.0;
    }
    (value / y_max) * PLOT_HEIGHT
}

/// Escapes text for use in SVG content and attribute values.
pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// One labeled bar series; None leaves a gap at that x position.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

fn svg_open(out: &mut String) {
    let _ = write!(
        out,
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n"
        ),
        w = CHART_WIDTH,
        h = CHART_HEIGHT,
    );
}

fn text(out: &mut String, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
    let _ = writeln!(
        out,
        "<text x=\"{x}\" y=\"{y}\" font-size=\"{size}\" text-anchor=\"{anchor}\" fill=\"#333333\">{}</text>",
        escape_xml(content)
    );
}

fn axes(out: &mut String) {
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + PLOT_HEIGHT;
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"#333333\"/>",
        MARGIN_TOP
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"#333333\"/>",
        MARGIN_LEFT + PLOT_WIDTH
    );
}

fn y_grid(out: &mut String, y_max: f64, ticks: usize) {
    for t in 0..=ticks {
        let frac = t as f64 / ticks as f64;
        let y = MARGIN_TOP + PLOT_HEIGHT - frac * PLOT_HEIGHT;
        if t > 0 {
            let _ = writeln!(
                out,
                "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>",
                MARGIN_LEFT,
                MARGIN_LEFT + PLOT_WIDTH
            );
        }
        text(out, MARGIN_LEFT - 8.0, y + 4.0, 11.0, "end", &format_tick(frac * y_max));
    }
}

fn format_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 && v.abs() < 1e6 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

fn legend(out: &mut String, names: &[(&str, &str)]) {
    let mut x = MARGIN_LEFT;
    let y = MARGIN_TOP - 18.0;
    for (name, color) in names {
        let _ = writeln!(
            out,
            "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            y - 9.0
        );
        text(out, x + 14.0, y, 11.0, "start", name);
        x += 14.0 + 7.0 * name.len() as f64 + 18.0;
    }
}

/// Grouped bar chart: one slot per x label, one bar per series inside each
/// slot, all on a shared [0, y_max] scale.
pub fn grouped_bar_chart(
    title: &str,
    subtitle: &str,
    x_labels: &[String],
    series: &[Series],
    y_max: f64,
) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    text(&mut out, CHART_WIDTH / 2.0, 22.0, 15.0, "middle", title);
    if !subtitle.is_empty() {
        text(&mut out, CHART_WIDTH / 2.0, 38.0, 11.0, "middle", subtitle);
    }
    y_grid(&mut out, y_max, 4);
    axes(&mut out);
    let swatches: Vec<(&str, &str)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), PALETTE[i % PALETTE.len()]))
        .collect();
    legend(&mut out, &swatches);

    let n_slots = x_labels.len().max(1);
    let n_series = series.len().max(1);
    let slot_w = PLOT_WIDTH / n_slots as f64;
    let bar_w = slot_w * 0.8 / n_series as f64;
    for (xi, label) in x_labels.iter().enumerate() {
        let slot_x = MARGIN_LEFT + xi as f64 * slot_w;
        for (si, s) in series.iter().enumerate() {
            let Some(value) = s.values.get(xi).copied().flatten() else { continue };
            let h = bar_height(value, y_max);
            let x = slot_x + slot_w * 0.1 + si as f64 * bar_w;
            let y = MARGIN_TOP + PLOT_HEIGHT - h;
            let _ = writeln!(
                out,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{h}\" fill=\"{}\" data-series=\"{}\" data-x=\"{}\" data-value=\"{value}\"/>",
                PALETTE[si % PALETTE.len()],
                escape_xml(&s.name),
                escape_xml(label)
            );
        }
        text(
            &mut out,
            slot_x + slot_w / 2.0,
            MARGIN_TOP + PLOT_HEIGHT + 18.0,
            11.0,
            "middle",
            label,
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Paired chart: per x label one frequency bar on the left axis scale and
/// one magnitude bar on the right axis scale.
pub fn paired_bar_chart(
    title: &str,
    subtitle: &str,
    x_labels: &[String],
    frequency: &[f64],
    magnitude: &[f64],
) -> String {
    let freq_max = frequency.iter().copied().fold(0.0f64, f64::max);
    let mag_max = magnitude.iter().copied().fold(0.0f64, f64::max);
    let mut out = String::new();
    svg_open(&mut out);
    text(&mut out, CHART_WIDTH / 2.0, 22.0, 15.0, "middle", title);
    if !subtitle.is_empty() {
        text(&mut out, CHART_WIDTH / 2.0, 38.0, 11.0, "middle", subtitle);
    }
    axes(&mut out);
    legend(&mut out, &[("frequency", PALETTE[0]), ("mean magnitude", PALETTE[1])]);
    // left and right axis end labels
    text(&mut out, MARGIN_LEFT - 8.0, MARGIN_TOP + 4.0, 11.0, "end", &format_tick(freq_max));
    text(&mut out, MARGIN_LEFT - 8.0, MARGIN_TOP + PLOT_HEIGHT + 4.0, 11.0, "end", "0");
    let right = MARGIN_LEFT + PLOT_WIDTH;
    let _ = writeln!(
        out,
        "<line x1=\"{right}\" y1=\"{}\" x2=\"{right}\" y2=\"{}\" stroke=\"#333333\"/>",
        MARGIN_TOP,
        MARGIN_TOP + PLOT_HEIGHT
    );
    text(&mut out, right + 8.0, MARGIN_TOP + 4.0, 11.0, "start", &format!("{mag_max:.3}"));
    text(&mut out, right + 8.0, MARGIN_TOP + PLOT_HEIGHT + 4.0, 11.0, "start", "0");

    let n_slots = x_labels.len().max(1);
    let slot_w = PLOT_WIDTH / n_slots as f64;
    let bar_w = slot_w * 0.8 / 2.0;
    for (xi, label) in x_labels.iter().enumerate() {
        let slot_x = MARGIN_LEFT + xi as f64 * slot_w;
        for (si, (values, y_max, name)) in
            [(frequency, freq_max, "frequency"), (magnitude, mag_max, "magnitude")]
                .iter()
                .enumerate()
        {
            let value = values[xi];
            let h = bar_height(value, *y_max);
            let x = slot_x + slot_w * 0.1 + si as f64 * bar_w;
            let y = MARGIN_TOP + PLOT_HEIGHT - h;
            let _ = writeln!(
                out,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{bar_w}\" height=\"{h}\" fill=\"{}\" data-series=\"{name}\" data-x=\"{}\" data-value=\"{value}\"/>",
                PALETTE[si % PALETTE.len()],
                escape_xml(label)
            );
        }
        text(
            &mut out,
            slot_x + slot_w / 2.0,
            MARGIN_TOP + PLOT_HEIGHT + 18.0,
            11.0,
            "middle",
            label,
        );
    }
    out.push_str("</svg>\n");
    out
}

fn metric_title(metric: &str) -> &'static str {
    match metric {
        "fraction" => "Minimal CE count as a fraction of d'",
        "coverage" => "Unique top-CE coverage of d'",
        "share" => "Top-k share of supporting CE mass",
        _ => "Metric",
    }
}

/// Groups charted: per class up to 12 classes, majority/minority beyond.
fn chart_groups(report: &DiagnosticsReport) -> Vec<String> {
    if report.num_classes <= 12 {
        (0..report.num_classes).map(|c| format!("class_{c}")).collect()
    } else {
        vec!["majority".into(), "minority".into()]
    }
}

fn metric_chart(report: &DiagnosticsReport, metric: &str) -> Option<String> {
    let methods = &report.config.methods;
    if methods.is_empty() {
        return None;
    }
    let x_labels: Vec<String> = methods.iter().map(|m| m.as_str().to_string()).collect();
    let series: Vec<Series> = chart_groups(report)
        .into_iter()
        .map(|group| Series {
            values: methods
                .iter()
                .map(|&m| {
                    report
                        .aggregates
                        .iter()
                        .find(|r| r.method == m && r.group == group && r.metric == metric)
                        .map(|r| r.mean)
                })
                .collect(),
            name: group,
        })
        .collect();
    if series.iter().all(|s| s.values.iter().all(Option::is_none)) {
        return None;
    }
    let subtitle = format!(
        "mean over {} split(s); baseline: {}",
        report.split_seeds.len(),
        report.baseline_mode.as_str()
    );
    Some(grouped_bar_chart(metric_title(metric), &subtitle, &x_labels, &series, 1.0))
}

fn freq_mag_chart(method: Method, fm: &FrequencyMagnitude) -> String {
    let x_labels: Vec<String> =
        fm.entries.iter().map(|e| format!("f{}", e.feature_index)).collect();
    let frequency: Vec<f64> = fm.entries.iter().map(|e| e.frequency as f64).collect();
    let magnitude: Vec<f64> = fm.entries.iter().map(|e| e.mean_magnitude).collect();
    paired_bar_chart(
        &format!("CE usage, class {} ({})", fm.class, method.as_str()),
        &format!("split 0 training true positives; spearman rho = {:.3}", fm.spearman_rho),
        &x_labels,
        &frequency,
        &magnitude,
    )
}

/// Writes every chart for the report into `dir` and returns manifest
/// entries for them, sorted by path.
pub fn emit_svg_charts(report: &DiagnosticsReport, dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut files: Vec<(String, String)> = Vec::new();
    for metric in ["fraction", "coverage", "share"] {
        if let Some(svg) = metric_chart(report, metric) {
            files.push((format!("chart_{metric}.svg"), svg));
        }
    }
    for cell in &report.cells {
        if cell.split != 0 {
            continue;
        }
        if let CellOutcome::Completed { metrics } = &cell.outcome {
            for fm in &metrics.freq_mag {
                files.push((
                    format!("freq_mag_{}_class{}.svg", cell.method.as_str(), fm.class),
                    freq_mag_chart(cell.method, fm),
                ));
            }
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));

    let mut entries = Vec::with_capacity(files.len());
    for (rel, content) in &files {
        let path = dir.join(rel);
        std::fs::write(&path, content.as_bytes())
            .map_err(|e| crate::error::Error::io(path, e))?;
        let mut hasher = Sha256::new();
        hasher.update(content.as_bytes());
        entries.push(ManifestEntry { path: rel.clone(), sha256: hex_digest(&hasher.finalize()) });
    }
    Ok(entries)
}
