//! Swept-sine closed-loop frequency response and the -3 dB crossover.

use super::scenario::{Architecture, ControllerSelection, ScenarioSpec, TissueSelection};
use super::HarnessError;
use crate::plant::MotionProfile;
use crate::simengine::{run_with_reference, LoopSchedule, SensorModel, SimError};
use std::f64::consts::PI;

/// Operating point of the sweep, N.
pub const SWEEP_OPERATING_FORCE_N: f64 = 5.0;

/// Default reference amplitude, N. Large enough that actuator stiction
/// does not dominate the small-signal response.
pub const SWEEP_DEFAULT_AMPLITUDE_N: f64 = 2.0;

const AMPLITUDE_RATIO_3DB: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn sweep_spec(architecture: Architecture) -> ScenarioSpec {
    let controller = match architecture {
        Architecture::EndEffector => 2,
        Architecture::Arm => 11,
    };
    ScenarioSpec {
        name: format!("bandwidth-sweep-{architecture}"),
        architecture,
        tissue: TissueSelection::Phantom,
        profile: MotionProfile::Static,
        target_force: SWEEP_OPERATING_FORCE_N,
        duration: 1.0, // overwritten per frequency
        replicates: 1,
        controller: ControllerSelection::Id(controller),
        schedule: LoopSchedule::default(),
        seed: 0,
        sensor: SensorModel::default(),
        transient_cut: None,
        codec_in_loop: false,
    }
}

/// Closed-loop amplitude ratio at one frequency: drive the force reference
/// with `5 + a sin(2 pi f t)` on the static plant and demodulate the
/// measured force over whole cycles after a settling interval.
pub fn measure_response(
    architecture: Architecture,
    frequency: f64,
    amplitude: f64,
) -> Result<f64, HarnessError> {
    if !(frequency > 0.0 && amplitude > 0.0) {
        return Err(HarnessError::Tuning(format!(
            "sweep frequency and amplitude must be positive, got {frequency} Hz, {amplitude} N"
        )));
    }
    let mut spec = sweep_spec(architecture);
    let cycles = (2.0 * frequency).ceil().max(2.0);
    let settle = (4.0 / frequency).max(3.0);
    let analysis = cycles / frequency;
    let sample_period = 1.0 / spec.schedule.sensor_rate;
    let total_samples = ((settle + analysis) / sample_period).ceil() as usize + 1;
    spec.duration = total_samples as f64 * sample_period;

    let w = 2.0 * PI * frequency;
    let trace = run_with_reference(&spec, 0, |t| {
        SWEEP_OPERATING_FORCE_N + amplitude * (w * t).sin()
    })
    .map_err(|e| match e {
        SimError::Diverged { .. } => HarnessError::SweepUnstable {
            frequency,
            source: e,
        },
        other => HarnessError::Sim(other),
    })?;

    let window: Vec<_> = trace.samples.iter().filter(|s| s.time >= settle).collect();
    if window.len() < 8 {
        return Err(HarnessError::Tuning(format!(
            "sweep window too short at {frequency} Hz"
        )));
    }
    let n = window.len() as f64;
    let mean = window.iter().map(|s| s.measured).sum::<f64>() / n;
    let mut in_phase = 0.0;
    let mut quadrature = 0.0;
    for s in &window {
        let m = s.measured - mean;
        in_phase += m * (w * s.time).sin();
        quadrature += m * (w * s.time).cos();
    }
    let measured_amplitude = 2.0 * (in_phase * in_phase + quadrature * quadrature).sqrt() / n;
    Ok(measured_amplitude / amplitude)
}

/// Swept-sine bandwidth: the -3 dB crossover of the measured/reference
/// amplitude ratio, log-interpolated between sweep points and averaged over
/// the given reference amplitudes.
pub fn measure_bandwidth(
    architecture: Architecture,
    amplitudes: &[f64],
) -> Result<f64, HarnessError> {
    let amplitudes = if amplitudes.is_empty() {
        &[SWEEP_DEFAULT_AMPLITUDE_N][..]
    } else {
        amplitudes
    };
    let mut crossovers = Vec::with_capacity(amplitudes.len());
    for &amplitude in amplitudes {
        crossovers.push(crossover_for_amplitude(architecture, amplitude)?);
    }
    Ok(crossovers.iter().sum::<f64>() / crossovers.len() as f64)
}

fn crossover_for_amplitude(
    architecture: Architecture,
    amplitude: f64,
) -> Result<f64, HarnessError> {
    // Log grid from 0.05 Hz to 40 Hz, 8 points per decade.
    let f_lo: f64 = 0.05;
    let f_hi: f64 = 40.0;
    let per_decade = 8.0;
    let n = ((f_hi / f_lo).log10() * per_decade).ceil() as usize;

    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=n {
        let f = f_lo * 10f64.powf(k as f64 / per_decade);
        let f = f.min(f_hi);
        let ratio = measure_response(architecture, f, amplitude)?;
        if let Some((f0, r0)) = prev {
            if r0 >= AMPLITUDE_RATIO_3DB && ratio < AMPLITUDE_RATIO_3DB {
                // Interpolate log-ratio against log-frequency.
                let t = (r0.ln() - AMPLITUDE_RATIO_3DB.ln()) / (r0.ln() - ratio.ln());
                return Ok(f0 * (f / f0).powf(t));
            }
        } else if ratio < AMPLITUDE_RATIO_3DB {
            // Already below at the bottom of the grid.
            return Ok(f);
        }
        prev = Some((f, ratio));
        if f >= f_hi {
            break;
        }
    }
    Err(HarnessError::NoCrossover { max_hz: f_hi })
}
