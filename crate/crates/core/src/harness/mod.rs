//! Experiment harness: scenario definitions, metrics, batch execution,
//! reporting, bandwidth measurement, and tuning support.

pub mod bandwidth;
pub mod metrics;
pub mod report;
pub mod scenario;
pub mod tuning;

use crate::simengine::SimError;
use std::path::PathBuf;
use thiserror::Error;

pub use bandwidth::{measure_bandwidth, measure_response};
pub use metrics::{compute_metrics, concatenate_traces, post_transient_window, Metrics};
pub use report::{
    emit_csv, emit_report, emit_svg, load_report, parse_trace_csv, parse_trace_csv_str,
    report_text, run_matrix, run_scenario_row, svg_overlay, trace_to_csv, ReportRow, CSV_HEADER,
};
pub use scenario::{
    builtin_scenarios, builtin_scenarios_seeded, Architecture, ControllerSelection, ScenarioSpec,
    TissueSelection, MAX_TARGET_FORCE_N, PORCINE_HETEROGENEITY,
};
pub use tuning::{find_ultimate_gain, UltimateGain};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("refusing to emit an empty trace")]
    EmptyTrace,
    #[error("metrics window is empty (transient cut {cut} s)")]
    EmptyWindow { cut: f64 },
    #[error("CSV parse error at line {line}: {reason}")]
    CsvParse { line: usize, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("frequency sweep found no -3 dB crossover below {max_hz} Hz")]
    NoCrossover { max_hz: f64 },
    #[error("closed loop went unstable during the sweep at {frequency} Hz: {source}")]
    SweepUnstable {
        frequency: f64,
        #[source]
        source: SimError,
    },
    #[error("tuning failed: {0}")]
    Tuning(String),
}

impl HarnessError {
    /// Configuration mistakes (exit code 2) as opposed to runtime scenario
    /// failures (exit code 1).
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Sim(SimError::Scenario(_))
                | HarnessError::Sim(SimError::Schedule(_))
                | HarnessError::Json(_)
                | HarnessError::CsvParse { .. }
        )
    }
}
