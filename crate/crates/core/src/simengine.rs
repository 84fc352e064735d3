//! Deterministic multi-rate execution: physics at a fine fixed step, force
//! sensing and control at 100 Hz, arm servo latching at its own rate.
//!
//! Each sensor tick samples the true contact force (plus optional seeded
//! noise), the controller acts on that sample in the same tick with zero
//! computational delay, and physics integrates between ticks. A `(spec,
//! seed)` pair maps to a bitwise-reproducible trace regardless of what else
//! runs in the process.

use crate::control::{
    arm_force_controller, end_effector_force_controller, ControlError, PidConfig, PidState,
};
use crate::harness::scenario::{Architecture, ScenarioSpec};
use crate::plant::{
    ActuatorModel, ArmPlant, ArmServoModel, CarriageModel, EndEffectorPlant, PlantError,
    PlantState, DEFAULT_PHYSICS_DT_S,
};
use crate::protocol::{decode_command, encode_command, CodecError, CodecRanges, CommandFrame};
use crate::rng::{mix64, replicate_seed, SplitMix64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SENSOR_STREAM_SALT: u64 = 0x5345_4E53;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation diverged (non-finite state) at t = {time} s")]
    Diverged { time: f64 },
    #[error("loop schedule mismatch: {0}")]
    Schedule(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl SimError {
    fn from_plant(err: PlantError, time: f64) -> Self {
        match err {
            PlantError::NonFinite { time } => SimError::Diverged { time },
            PlantError::InvalidParameter(msg) => SimError::Scenario(msg),
            #[allow(unreachable_patterns)]
            _ => SimError::Diverged { time },
        }
    }

    fn from_control(err: ControlError, time: f64) -> Self {
        match err {
            ControlError::NonFiniteInput(_) => SimError::Diverged { time },
            other => SimError::Scenario(other.to_string()),
        }
    }
}

/// Loop rates of the multi-rate executive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopSchedule {
    /// Physics integration step, s.
    pub physics_dt: f64,
    /// Force sensor sampling rate, Hz.
    pub sensor_rate: f64,
    /// Force control rate, Hz; must not exceed the sensor rate.
    pub control_rate: f64,
    /// Arm servo setpoint latch rate, Hz.
    pub servo_rate: f64,
}

impl Default for LoopSchedule {
    fn default() -> Self {
        Self {
            physics_dt: DEFAULT_PHYSICS_DT_S,
            sensor_rate: 100.0,
            control_rate: 100.0,
            servo_rate: 125.0,
        }
    }
}

pub(crate) struct ScheduleTicks {
    pub steps_per_sample: usize,
    pub samples_per_control: usize,
    pub servo_period_steps: u64,
}

impl LoopSchedule {
    pub fn validate(&self) -> Result<(), SimError> {
        self.ticks().map(|_| ())
    }

    pub(crate) fn ticks(&self) -> Result<ScheduleTicks, SimError> {
        for (name, v) in [
            ("physics_dt", self.physics_dt),
            ("sensor_rate", self.sensor_rate),
            ("control_rate", self.control_rate),
            ("servo_rate", self.servo_rate),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::Schedule(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.control_rate > self.sensor_rate {
            return Err(SimError::Schedule(format!(
                "control_rate {} exceeds sensor_rate {}",
                self.control_rate, self.sensor_rate
            )));
        }
        let steps_per_sample = integer_ratio(
            1.0 / self.sensor_rate,
            self.physics_dt,
            "sensor period",
            "physics_dt",
        )?;
        let samples_per_control = integer_ratio(
            self.sensor_rate,
            self.control_rate,
            "sensor_rate",
            "control_rate",
        )?;
        let servo_period_steps = integer_ratio(
            1.0 / self.servo_rate,
            self.physics_dt,
            "servo period",
            "physics_dt",
        )? as u64;
        Ok(ScheduleTicks {
            steps_per_sample,
            samples_per_control,
            servo_period_steps,
        })
    }
}

fn integer_ratio(num: f64, den: f64, num_name: &str, den_name: &str) -> Result<usize, SimError> {
    let ratio = num / den;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-6 * ratio.abs() {
        return Err(SimError::Schedule(format!(
            "{den_name} must divide {num_name}: ratio {ratio} is not an integer"
        )));
    }
    Ok(rounded as usize)
}

/// Force sensor imperfections; all off by default so the baseline is
/// deterministic in the strictest sense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// Additive Gaussian noise, N.
    pub noise_std: f64,
    /// Reading quantization, N.
    pub quantization: f64,
    /// Extra stream salt mixed into the replicate seed.
    pub seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            noise_std: 0.0,
            quantization: 0.0,
            seed: 0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.noise_std >= 0.0 && self.quantization >= 0.0) {
            return Err(SimError::Scenario(format!(
                "sensor noise_std and quantization must be non-negative, got {} and {}",
                self.noise_std, self.quantization
            )));
        }
        Ok(())
    }

    fn apply(&self, truth: f64, rng: &mut SplitMix64) -> f64 {
        let mut v = truth;
        if self.noise_std > 0.0 {
            v += self.noise_std * rng.next_gaussian();
        }
        if self.quantization > 0.0 {
            v = (v / self.quantization).round() * self.quantization;
        }
        v
    }
}

/// One sensor-tick record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    /// Commanded force, N.
    pub target: f64,
    /// Sensor reading, N.
    pub measured: f64,
    /// True contact force, N.
    pub true_force: f64,
    pub probe_position: f64,
    pub platform_position: f64,
    /// Active controller output: torque (Nm) for the end-effector,
    /// position setpoint (m) for the arm.
    pub command: f64,
}

/// Time-ordered samples at the sensor rate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub samples: Vec<TraceSample>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) if self.samples.len() > 1 => {
                let dt = (b.time - a.time) / (self.samples.len() - 1) as f64;
                b.time - a.time + dt
            }
            _ => 0.0,
        }
    }
}

/// Run replicate 0 of the scenario.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<SimTrace, SimError> {
    run_replicate(spec, 0)
}

/// Run `n` replicates with per-replicate derived seeds: deterministic, and
/// distinct whenever noise or heterogeneity is enabled.
pub fn run_replicates(spec: &ScenarioSpec, n: u32) -> Result<Vec<SimTrace>, SimError> {
    if n < 1 {
        return Err(SimError::Scenario("replicate count must be >= 1".into()));
    }
    (0..n).map(|i| run_replicate(spec, i)).collect()
}

/// Run one replicate against the constant scenario target.
pub fn run_replicate(spec: &ScenarioSpec, replicate: u32) -> Result<SimTrace, SimError> {
    let target = spec.target_force;
    run_with_reference(spec, replicate, |_| target)
}

/// Run one replicate tracking an arbitrary force reference over time. The
/// initial state rests at the closed-loop equilibrium for `reference(0)`.
pub fn run_with_reference(
    spec: &ScenarioSpec,
    replicate: u32,
    reference: impl Fn(f64) -> f64,
) -> Result<SimTrace, SimError> {
    spec.validate()?;
    let ticks = spec.schedule.ticks()?;
    let dt = spec.schedule.physics_dt;
    let sample_period = 1.0 / spec.schedule.sensor_rate;
    let n_samples = (spec.duration * spec.schedule.sensor_rate).round() as usize;
    if n_samples == 0 {
        return Err(SimError::Scenario(format!(
            "duration {} s is shorter than one sensor period",
            spec.duration
        )));
    }

    let rep_seed = replicate_seed(spec.seed, replicate);
    let tissue = spec.tissue.resolve(rep_seed);
    let mut sensor_rng = SplitMix64::new(mix64(
        rep_seed ^ mix64(spec.sensor.seed) ^ SENSOR_STREAM_SALT,
    ));

    let gains = spec
        .controller
        .gains()
        .map_err(|e| SimError::Scenario(e.to_string()))?;
    let control_period = 1.0 / spec.schedule.control_rate;
    let ranges = CodecRanges::standard();

    match spec.architecture {
        Architecture::EndEffector => {
            let actuator = ActuatorModel::default();
            let plant = EndEffectorPlant::new(
                actuator,
                CarriageModel::default(),
                tissue,
                spec.profile.clone(),
            )
            .map_err(|e| SimError::from_plant(e, 0.0))?;
            let cfg = PidConfig::end_effector(gains, control_period, actuator.rated_torque);
            cfg.validate()
                .map_err(|e| SimError::Scenario(e.to_string()))?;
            let r = plant.carriage.geometry.pulley_radius();

            // Closed-loop hold point: the exact target with integral action,
            // the proportional droop equilibrium without it.
            let target0 = reference(0.0);
            let hold_force = if gains.ki > 0.0 {
                target0
            } else {
                gains.kp * target0 / (gains.kp + r)
            };
            let mut state = plant
                .equilibrium_state(hold_force, 0.0)
                .map_err(|e| SimError::from_plant(e, 0.0))?;
            let preload = if gains.ki > 0.0 { r * hold_force } else { 0.0 };
            let mut pid = PidState::preloaded(preload, target0 - state.contact_force, &cfg);
            let mut torque = r * hold_force;

            let mut samples = Vec::with_capacity(n_samples);
            for i in 0..n_samples {
                let t = i as f64 * sample_period;
                let true_force = state.contact_force;
                let measured = spec.sensor.apply(true_force, &mut sensor_rng);
                let target = reference(t);
                if i % ticks.samples_per_control == 0 {
                    let (cmd, next) = end_effector_force_controller(target, measured, &pid, &cfg)
                        .map_err(|e| SimError::from_control(e, t))?;
                    pid = next;
                    torque = if spec.codec_in_loop {
                        codec_roundtrip_torque(cmd, &state, &ranges)?
                    } else {
                        cmd
                    };
                }
                samples.push(TraceSample {
                    time: t,
                    target,
                    measured,
                    true_force,
                    probe_position: state.probe_position,
                    platform_position: state.platform_position,
                    command: torque,
                });
                for _ in 0..ticks.steps_per_sample {
                    state = plant
                        .step(&state, torque, dt)
                        .map_err(|e| SimError::from_plant(e, state.time))?;
                }
            }
            Ok(SimTrace { samples })
        }
        Architecture::Arm => {
            let plant = ArmPlant::new(ArmServoModel::default(), tissue, spec.profile.clone())
                .map_err(|e| SimError::from_plant(e, 0.0))?;
            let cfg = PidConfig::arm(gains, control_period);
            cfg.validate()
                .map_err(|e| SimError::Scenario(e.to_string()))?;

            let target0 = reference(0.0);
            let mut state = plant
                .equilibrium_state(target0, 0.0)
                .map_err(|e| SimError::from_plant(e, 0.0))?;
            let mut pid = PidState::preloaded(0.0, target0 - state.contact_force, &cfg);
            // The admittance loop advances the previously commanded
            // setpoint, starting from the resting flange pose.
            let mut setpoint = state.flange_position;
            let mut latched = setpoint;
            let mut physics_step: u64 = 0;

            let mut samples = Vec::with_capacity(n_samples);
            for i in 0..n_samples {
                let t = i as f64 * sample_period;
                let true_force = state.contact_force;
                let measured = spec.sensor.apply(true_force, &mut sensor_rng);
                let target = reference(t);
                if i % ticks.samples_per_control == 0 {
                    let (cmd, next) = arm_force_controller(target, measured, &pid, &cfg, setpoint)
                        .map_err(|e| SimError::from_control(e, t))?;
                    pid = next;
                    setpoint = cmd;
                }
                samples.push(TraceSample {
                    time: t,
                    target,
                    measured,
                    true_force,
                    probe_position: state.probe_position,
                    platform_position: state.platform_position,
                    command: setpoint,
                });
                for _ in 0..ticks.steps_per_sample {
                    if physics_step.is_multiple_of(ticks.servo_period_steps) {
                        latched = setpoint;
                    }
                    state = plant
                        .step(&state, latched, dt)
                        .map_err(|e| SimError::from_plant(e, state.time))?;
                    physics_step += 1;
                }
            }
            Ok(SimTrace { samples })
        }
    }
}

/// Pass a torque command across the wire: encode the command frame, decode
/// it back, return the quantized torque. Position and velocity ride along
/// clamped into their codec ranges.
fn codec_roundtrip_torque(
    torque: f64,
    state: &PlantState,
    ranges: &CodecRanges,
) -> Result<f64, SimError> {
    let frame = CommandFrame {
        torque_setpoint: torque,
        position_setpoint: state.theta.clamp(ranges.position.min, ranges.position.max),
        velocity_setpoint: state.omega.clamp(ranges.velocity.min, ranges.velocity.max),
        kp_field: 0.0,
        kd_field: 0.0,
    };
    let payload = encode_command(&frame, ranges)?;
    Ok(decode_command(&payload, ranges)?.torque_setpoint)
}
