//! Batch execution, trace files, plots, and the results report.

use super::metrics::{compute_metrics, concatenate_traces, post_transient_window, Metrics};
use super::scenario::ScenarioSpec;
use super::HarnessError;
use crate::simengine::{run_replicates, SimTrace, TraceSample};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Exact header of the trace CSV format.
pub const CSV_HEADER: &str = "time_s,target_N,measured_N,true_N,probe_m,platform_m,command";

/// Per-scenario results: one metrics row per replicate plus pooled metrics
/// over the concatenated post-transient windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub target_force: f64,
    pub replicates: Vec<Metrics>,
    pub pooled: Metrics,
}

/// Run one scenario's replicates and reduce them to a report row.
pub fn run_scenario_row(spec: &ScenarioSpec) -> Result<(ReportRow, Vec<SimTrace>), HarnessError> {
    let traces = run_replicates(spec, spec.replicates)?;
    let cut = spec.effective_transient_cut();
    let replicates = traces
        .iter()
        .map(|t| compute_metrics(t, spec.target_force, cut))
        .collect::<Result<Vec<_>, _>>()?;
    let windows: Vec<SimTrace> = traces
        .iter()
        .map(|t| post_transient_window(t, cut))
        .collect();
    let pooled = compute_metrics(&concatenate_traces(&windows), spec.target_force, 0.0)?;
    Ok((
        ReportRow {
            scenario: spec.name.clone(),
            target_force: spec.target_force,
            replicates,
            pooled,
        },
        traces,
    ))
}

/// Execute every scenario, serially or on the rayon pool. Failures are
/// collected per scenario without aborting the batch, and the output order
/// always matches the input order.
pub fn run_matrix(specs: &[ScenarioSpec], parallel: bool) -> Vec<Result<ReportRow, HarnessError>> {
    if parallel {
        specs
            .par_iter()
            .map(|spec| run_scenario_row(spec).map(|(row, _)| row))
            .collect()
    } else {
        specs
            .iter()
            .map(|spec| run_scenario_row(spec).map(|(row, _)| row))
            .collect()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Render a trace as CSV text. Floats use Rust's shortest round-trip
/// formatting, so parsing recovers the exact values.
pub fn trace_to_csv(trace: &SimTrace) -> Result<String, HarnessError> {
    if trace.is_empty() {
        return Err(HarnessError::EmptyTrace);
    }
    let mut out = String::with_capacity(trace.len() * 64 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in &trace.samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.time,
            s.target,
            s.measured,
            s.true_force,
            s.probe_position,
            s.platform_position,
            s.command
        )
        .expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn emit_csv(trace: &SimTrace, path: &Path) -> Result<(), HarnessError> {
    let text = trace_to_csv(trace)?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// Parse CSV text produced by [`trace_to_csv`].
pub fn parse_trace_csv_str(text: &str) -> Result<SimTrace, HarnessError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == CSV_HEADER => {}
        other => {
            return Err(HarnessError::CsvParse {
                line: 1,
                reason: format!(
                    "expected header {CSV_HEADER:?}, got {:?}",
                    other.map(|(_, h)| h).unwrap_or("")
                ),
            })
        }
    }
    let mut samples = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 7 {
            return Err(HarnessError::CsvParse {
                line,
                reason: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let mut values = [0.0f64; 7];
        for (i, f) in fields.iter().enumerate() {
            values[i] = f.trim().parse().map_err(|e| HarnessError::CsvParse {
                line,
                reason: format!("field {}: {e}", i + 1),
            })?;
        }
        samples.push(TraceSample {
            time: values[0],
            target: values[1],
            measured: values[2],
            true_force: values[3],
            probe_position: values[4],
            platform_position: values[5],
            command: values[6],
        });
    }
    Ok(SimTrace { samples })
}

pub fn parse_trace_csv(path: &Path) -> Result<SimTrace, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_trace_csv_str(&text)
}

const SVG_COLORS: [&str; 6] = [
    "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Render target and measured force over time as a standalone SVG overlay.
pub fn svg_overlay(traces: &[SimTrace]) -> Result<String, HarnessError> {
    if traces.is_empty() || traces.iter().all(SimTrace::is_empty) {
        return Err(HarnessError::EmptyTrace);
    }
    let (width, height) = (880.0, 520.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let mut t_max: f64 = 0.0;
    let mut f_min = f64::INFINITY;
    let mut f_max = f64::NEG_INFINITY;
    for trace in traces {
        for s in &trace.samples {
            t_max = t_max.max(s.time);
            f_min = f_min.min(s.measured.min(s.target));
            f_max = f_max.max(s.measured.max(s.target));
        }
    }
    if !(f_max > f_min) {
        f_min -= 1.0;
        f_max += 1.0;
    }
    let pad = 0.05 * (f_max - f_min);
    f_min -= pad;
    f_max += pad;
    let t_max = if t_max > 0.0 { t_max } else { 1.0 };

    let x = |t: f64| left + t / t_max * plot_w;
    let y = |f: f64| top + (f_max - f) / (f_max - f_min) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    )
    .unwrap();
    writeln!(
        svg,
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>"
    )
    .unwrap();

    // Axes with ticks and numeric labels.
    writeln!(
        svg,
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        top + plot_h,
        left + plot_w,
        top + plot_h
    )
    .unwrap();
    writeln!(
        svg,
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>",
        top + plot_h
    )
    .unwrap();
    for k in 0..=5 {
        let t = t_max * k as f64 / 5.0;
        let f = f_min + (f_max - f_min) * k as f64 / 5.0;
        writeln!(
            svg,
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>",
            x(t),
            top + plot_h,
            top + plot_h + 5.0
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{t:.1}</text>",
            x(t),
            top + plot_h + 20.0
        )
        .unwrap();
        writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{1}\" x2=\"{left}\" y2=\"{1}\" stroke=\"black\"/>",
            left - 5.0,
            y(f)
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{f:.1}</text>",
            left - 8.0,
            y(f) + 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">time (s)</text>",
        left + plot_w / 2.0,
        height - 12.0
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">force (N)</text>",
        top + plot_h / 2.0
    )
    .unwrap();

    let polyline = |svg: &mut String, points: &[(f64, f64)], style: &str| {
        let mut d = String::new();
        for (px, py) in points {
            write!(d, "{px:.2},{py:.2} ").unwrap();
        }
        writeln!(
            svg,
            "<polyline fill=\"none\" {style} points=\"{}\"/>",
            d.trim()
        )
        .unwrap();
    };

    // Target from the first non-empty trace, dashed.
    if let Some(first) = traces.iter().find(|t| !t.is_empty()) {
        let pts: Vec<(f64, f64)> = first
            .samples
            .iter()
            .map(|s| (x(s.time), y(s.target)))
            .collect();
        polyline(
            &mut svg,
            &pts,
            "stroke=\"#555555\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"",
        );
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#555555\">target</text>",
            left + plot_w - 120.0,
            top + 16.0
        )
        .unwrap();
    }
    for (i, trace) in traces.iter().filter(|t| !t.is_empty()).enumerate() {
        let color = SVG_COLORS[i % SVG_COLORS.len()];
        let pts: Vec<(f64, f64)> = trace
            .samples
            .iter()
            .map(|s| (x(s.time), y(s.measured)))
            .collect();
        polyline(
            &mut svg,
            &pts,
            &format!("stroke=\"{color}\" stroke-width=\"1.5\""),
        );
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">measured {}</text>",
            left + plot_w - 120.0,
            top + 32.0 + 16.0 * i as f64,
            i + 1
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_svg(traces: &[SimTrace], path: &Path) -> Result<(), HarnessError> {
    let svg = svg_overlay(traces)?;
    std::fs::write(path, svg).map_err(io_err(path))
}

fn fmt_settling(v: Option<f64>) -> String {
    match v {
        Some(t) => format!("{t:.2}"),
        None => "-".into(),
    }
}

/// The report as an aligned text table: pooled statistics per scenario plus
/// per-replicate RMSe.
pub fn report_text(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<28} {:>7} {:>8} {:>8} {:>8} {:>8} {:>8}  per-replicate RMSe",
        "scenario", "target", "mean", "RMSe", "min", "max", "settle"
    )
    .unwrap();
    for row in rows {
        let reps = row
            .replicates
            .iter()
            .map(|m| format!("{:.3}", m.rmse))
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(
            out,
            "{:<28} {:>7.2} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8}  {reps}",
            row.scenario,
            row.target_force,
            row.pooled.mean,
            row.pooled.rmse,
            row.pooled.min,
            row.pooled.max,
            fmt_settling(row.pooled.settling_time),
        )
        .unwrap();
    }
    out
}

/// Write the report: aligned text at `path`, machine-readable JSON next to
/// it with the extension swapped to `.json` (or `.txt` swapped in when the
/// given path already ends in `.json`).
pub fn emit_report(rows: &[ReportRow], path: &Path) -> Result<(), HarnessError> {
    let json_path = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        path.to_path_buf()
    } else {
        path.with_extension("json")
    };
    let text_path: PathBuf = if json_path == path {
        path.with_extension("txt")
    } else {
        path.to_path_buf()
    };
    std::fs::write(&text_path, report_text(rows)).map_err(io_err(&text_path))?;
    let json = serde_json::to_string_pretty(rows)?;
    std::fs::write(&json_path, json).map_err(io_err(&json_path))?;
    Ok(())
}

/// Read back the JSON report written by [`emit_report`].
pub fn load_report(path: &Path) -> Result<Vec<ReportRow>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}
