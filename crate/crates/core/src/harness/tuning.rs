//! Ultimate-gain search: the proportional-only sweep feeding the
//! Ziegler-Nichols rule.

use super::scenario::{Architecture, ControllerSelection, ScenarioSpec, TissueSelection};
use super::HarnessError;
use crate::control::PidGains;
use crate::plant::MotionProfile;
use crate::simengine::{run_with_reference, LoopSchedule, SensorModel, SimError};

/// Proportional gain and oscillation period at the edge of sustained
/// oscillation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UltimateGain {
    pub ku: f64,
    pub tu: f64,
}

const TARGET_N: f64 = 5.0;
const STEP_N: f64 = 0.25;
const STEP_AT_S: f64 = 0.5;
const RUN_S: f64 = 6.0;
const ANALYZE_FROM_S: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Envelope {
    Decaying,
    Sustained,
    Growing,
}

/// Oscillation peaks of the error signal after the analysis start.
struct Peaks {
    amplitudes: Vec<f64>,
    times: Vec<f64>,
}

fn run_p_only(
    architecture: Architecture,
    profile: &MotionProfile,
    kp: f64,
) -> Result<Peaks, HarnessError> {
    let spec = ScenarioSpec {
        name: format!("ultimate-gain-{architecture}"),
        architecture,
        tissue: TissueSelection::Phantom,
        profile: profile.clone(),
        target_force: TARGET_N,
        duration: RUN_S,
        replicates: 1,
        controller: ControllerSelection::Gains(PidGains {
            kp,
            ki: 0.0,
            kd: 0.0,
        }),
        schedule: LoopSchedule::default(),
        seed: 0,
        sensor: SensorModel::default(),
        transient_cut: None,
        codec_in_loop: false,
    };
    // A small reference step excites the loop at its natural frequency.
    let trace = run_with_reference(&spec, 0, |t| {
        if t >= STEP_AT_S {
            TARGET_N + STEP_N
        } else {
            TARGET_N
        }
    });
    let trace = match trace {
        Ok(t) => t,
        // Outright divergence means we are far past the ultimate gain.
        Err(SimError::Diverged { .. }) => {
            return Ok(Peaks {
                amplitudes: vec![f64::INFINITY, f64::INFINITY, f64::INFINITY],
                times: vec![0.0, 1.0, 2.0],
            })
        }
        Err(other) => return Err(other.into()),
    };

    let window: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .filter(|s| s.time >= ANALYZE_FROM_S)
        .map(|s| (s.time, s.measured - s.target))
        .collect();
    let mean = window.iter().map(|(_, e)| e).sum::<f64>() / window.len() as f64;
    let detrended: Vec<(f64, f64)> = window.iter().map(|(t, e)| (*t, e - mean)).collect();

    let mut amplitudes = Vec::new();
    let mut times = Vec::new();
    for i in 1..detrended.len().saturating_sub(1) {
        let (t, e) = detrended[i];
        if e > detrended[i - 1].1 && e >= detrended[i + 1].1 && e > 1e-9 {
            amplitudes.push(e);
            times.push(t);
        }
    }
    Ok(Peaks { amplitudes, times })
}

fn classify(peaks: &Peaks) -> Envelope {
    if peaks.amplitudes.len() < 3 || peaks.amplitudes.iter().all(|a| *a < 1e-3) {
        return Envelope::Decaying;
    }
    if peaks.amplitudes.iter().any(|a| !a.is_finite()) {
        return Envelope::Growing;
    }
    // Per-period geometric mean of the first-to-last amplitude ratio:
    // robust against the irregular peak trains of saturated limit cycles.
    let first = peaks.amplitudes.first().unwrap().max(1e-12);
    let last = *peaks.amplitudes.last().unwrap();
    let ratio = (last / first).powf(1.0 / (peaks.amplitudes.len() - 1) as f64);
    if ratio > 1.05 {
        Envelope::Growing
    } else if ratio >= 0.95 {
        Envelope::Sustained
    } else {
        Envelope::Decaying
    }
}

fn period_from(peaks: &Peaks) -> Option<f64> {
    if peaks.times.len() < 2 {
        return None;
    }
    let spans: Vec<f64> = peaks.times.windows(2).map(|w| w[1] - w[0]).collect();
    Some(spans.iter().sum::<f64>() / spans.len() as f64)
}

/// Find the ultimate gain and period by a proportional-only bisection sweep
/// on the simulated plant: raise `kp` until the step response stops
/// decaying (successive peak ratio inside [0.95, 1.05] counts as sustained)
/// and take the oscillation period there.
pub fn find_ultimate_gain(
    architecture: Architecture,
    profile: &MotionProfile,
) -> Result<UltimateGain, HarnessError> {
    let mut lo = 0.01;
    let lo_peaks = run_p_only(architecture, profile, lo)?;
    if classify(&lo_peaks) != Envelope::Decaying {
        return Err(HarnessError::Tuning(format!(
            "loop already oscillates at kp = {lo}"
        )));
    }

    // Grow the bracket until the envelope stops decaying.
    let mut hi = lo * 2.0;
    loop {
        let peaks = run_p_only(architecture, profile, hi)?;
        if classify(&peaks) != Envelope::Decaying {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(HarnessError::Tuning(
                "no sustained oscillation below kp = 1e4".into(),
            ));
        }
    }

    // Bisect onto the stability boundary.
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let peaks = run_p_only(architecture, profile, mid)?;
        match classify(&peaks) {
            Envelope::Decaying => lo = mid,
            _ => hi = mid,
        }
        if (hi - lo) / hi < 1e-4 {
            break;
        }
    }
    let ku = 0.5 * (lo + hi);
    let peaks = run_p_only(architecture, profile, hi)?;
    let tu = period_from(&peaks)
        .or_else(|| {
            run_p_only(architecture, profile, ku)
                .ok()
                .and_then(|p| period_from(&p))
        })
        .ok_or_else(|| HarnessError::Tuning("could not extract an oscillation period".into()))?;
    Ok(UltimateGain { ku, tu })
}
