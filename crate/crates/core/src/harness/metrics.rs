//! Force-tracking statistics over trace windows.

use super::HarnessError;
use crate::simengine::{SimTrace, TraceSample};
use serde::{Deserialize, Serialize};

/// Mean, root-mean-square error, extremes, and settling time of the
/// measured force against a constant target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean: f64,
    pub rmse: f64,
    pub min: f64,
    pub max: f64,
    /// First time after which |error| stays below 10% of the target; `None`
    /// when the trace never settles.
    pub settling_time: Option<f64>,
}

/// Statistics over all samples with `time >= transient_cut`. Settling time
/// is evaluated over the whole trace.
pub fn compute_metrics(
    trace: &SimTrace,
    target: f64,
    transient_cut: f64,
) -> Result<Metrics, HarnessError> {
    let window: Vec<&TraceSample> = trace
        .samples
        .iter()
        .filter(|s| s.time >= transient_cut)
        .collect();
    if window.is_empty() {
        return Err(HarnessError::EmptyWindow { cut: transient_cut });
    }
    let n = window.len() as f64;
    let mean = window.iter().map(|s| s.measured).sum::<f64>() / n;
    let rmse = (window
        .iter()
        .map(|s| (s.measured - target) * (s.measured - target))
        .sum::<f64>()
        / n)
        .sqrt();
    let min = window
        .iter()
        .map(|s| s.measured)
        .fold(f64::INFINITY, f64::min);
    let max = window
        .iter()
        .map(|s| s.measured)
        .fold(f64::NEG_INFINITY, f64::max);

    let band = 0.1 * target.abs();
    let mut settling_time = None;
    for s in trace.samples.iter().rev() {
        if (s.measured - target).abs() >= band {
            break;
        }
        settling_time = Some(s.time);
    }

    Ok(Metrics {
        mean,
        rmse,
        min,
        max,
        settling_time,
    })
}

/// Join traces end to end, re-basing times so spacing stays uniform. Used
/// for pooled statistics over replicates.
pub fn concatenate_traces(traces: &[SimTrace]) -> SimTrace {
    let spacing = traces
        .iter()
        .find_map(|t| (t.samples.len() > 1).then(|| t.samples[1].time - t.samples[0].time))
        .unwrap_or(0.01);
    let mut samples = Vec::with_capacity(traces.iter().map(SimTrace::len).sum());
    let mut offset = 0.0;
    for trace in traces {
        let base = trace.samples.first().map_or(0.0, |s| s.time);
        for s in &trace.samples {
            let mut shifted = *s;
            shifted.time = offset + (s.time - base);
            samples.push(shifted);
        }
        if let Some(last) = trace.samples.last() {
            offset += last.time - base + spacing;
        }
    }
    SimTrace { samples }
}

/// Samples at or past the transient cut, re-based to start at zero.
pub fn post_transient_window(trace: &SimTrace, transient_cut: f64) -> SimTrace {
    let samples: Vec<TraceSample> = trace
        .samples
        .iter()
        .filter(|s| s.time >= transient_cut)
        .copied()
        .collect();
    let base = samples.first().map_or(0.0, |s| s.time);
    SimTrace {
        samples: samples
            .into_iter()
            .map(|mut s| {
                s.time -= base;
                s
            })
            .collect(),
    }
}
