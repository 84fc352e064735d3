//! Discrete PID force control in both architectures, the tuned gain bank,
//! and the Ziegler-Nichols rule.
//!
//! The end-effector runs current-based force control: the PID output is the
//! motor torque command in N*m, clamped to the rated torque. The robot arm
//! runs position-based force control: the PID output is scaled by
//! [`ARM_SETPOINT_SCALE_M`] into a setpoint increment in meters, clamped per
//! step, and added to the previous commanded position.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meters of arm setpoint increment per unit of PID output.
pub const ARM_SETPOINT_SCALE_M: f64 = 1e-3;

/// Hard bound on the arm setpoint increment per control step, m.
pub const ARM_SETPOINT_STEP_LIMIT_M: f64 = 2e-3;

/// Default first-order derivative filter coefficient at 100 Hz.
pub const DERIVATIVE_FILTER_COEFF: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("non-finite controller input: {0}")]
    NonFiniteInput(f64),
    #[error("unknown controller id {0}, expected 1..=15")]
    UnknownController(u8),
    #[error("invalid PID gains: {0}")]
    InvalidGains(String),
    #[error("invalid PID config: {0}")]
    InvalidConfig(String),
    #[error("Ziegler-Nichols inputs must be positive, got Ku = {ku}, Tu = {tu}")]
    NonPositiveTuningInput { ku: f64, tu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Result<Self, ControlError> {
        let g = Self { kp, ki, kd };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.kp >= 0.0 && self.ki >= 0.0 && self.kd >= 0.0)
            || !(self.kp.is_finite() && self.ki.is_finite() && self.kd.is_finite())
        {
            return Err(ControlError::InvalidGains(format!(
                "gains must be finite and non-negative, got ({}, {}, {})",
                self.kp, self.ki, self.kd
            )));
        }
        Ok(())
    }
}

/// Discrete-loop configuration around a gain triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidConfig {
    pub gains: PidGains,
    /// Control period, s.
    pub sample_period: f64,
    pub output_min: f64,
    pub output_max: f64,
    pub integral_min: f64,
    pub integral_max: f64,
    /// First-order low-pass coefficient on the derivative term, in [0, 1).
    pub derivative_filter_coeff: f64,
}

impl PidConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        self.gains.validate()?;
        if !(self.sample_period > 0.0) {
            return Err(ControlError::InvalidConfig(format!(
                "sample_period must be positive, got {}",
                self.sample_period
            )));
        }
        if !(self.output_min < self.output_max) {
            return Err(ControlError::InvalidConfig(format!(
                "output_min {} must be below output_max {}",
                self.output_min, self.output_max
            )));
        }
        if !(self.integral_min <= self.integral_max) {
            return Err(ControlError::InvalidConfig(
                "integral bounds are inverted".into(),
            ));
        }
        if !((0.0..1.0).contains(&self.derivative_filter_coeff)) {
            return Err(ControlError::InvalidConfig(format!(
                "derivative_filter_coeff must lie in [0, 1), got {}",
                self.derivative_filter_coeff
            )));
        }
        Ok(())
    }

    /// Torque-output loop for the end-effector: output and integral clamped
    /// to the rated torque.
    pub fn end_effector(gains: PidGains, sample_period: f64, rated_torque: f64) -> Self {
        Self {
            gains,
            sample_period,
            output_min: -rated_torque,
            output_max: rated_torque,
            integral_min: -rated_torque,
            integral_max: rated_torque,
            derivative_filter_coeff: DERIVATIVE_FILTER_COEFF,
        }
    }

    /// Setpoint-delta loop for the arm: output clamped so the scaled step
    /// never exceeds [`ARM_SETPOINT_STEP_LIMIT_M`].
    pub fn arm(gains: PidGains, sample_period: f64) -> Self {
        let bound = ARM_SETPOINT_STEP_LIMIT_M / ARM_SETPOINT_SCALE_M;
        Self {
            gains,
            sample_period,
            output_min: -bound,
            output_max: bound,
            integral_min: -bound,
            integral_max: bound,
            derivative_filter_coeff: DERIVATIVE_FILTER_COEFF,
        }
    }
}

/// Controller memory carried between steps. `reset` semantics = `default`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    /// Accumulated integral term, in command units.
    pub integral: f64,
    /// Error seen at the previous step, N.
    pub previous_error: f64,
    /// Filtered derivative term at the previous step, in command units.
    pub previous_derivative: f64,
}

impl PidState {
    /// State whose first derivative sample is zero for the given error,
    /// with the integral term preloaded (then clamped) to `hold`.
    pub fn preloaded(hold: f64, error: f64, config: &PidConfig) -> Self {
        Self {
            integral: hold.clamp(config.integral_min, config.integral_max),
            previous_error: error,
            previous_derivative: 0.0,
        }
    }

    /// Zero every field.
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// One fixed-period PID update. Returns the clamped command and the next
/// state; the integral is accumulated before output and clamped for
/// anti-windup.
pub fn pid_step(
    state: &PidState,
    config: &PidConfig,
    error: f64,
) -> Result<(f64, PidState), ControlError> {
    if !error.is_finite() {
        return Err(ControlError::NonFiniteInput(error));
    }
    let g = &config.gains;
    let dt = config.sample_period;

    let integral =
        (state.integral + g.ki * error * dt).clamp(config.integral_min, config.integral_max);
    let raw_derivative = (error - state.previous_error) / dt;
    let alpha = config.derivative_filter_coeff;
    let derivative = alpha * state.previous_derivative + (1.0 - alpha) * g.kd * raw_derivative;

    let command =
        (g.kp * error + integral + derivative).clamp(config.output_min, config.output_max);
    Ok((
        command,
        PidState {
            integral,
            previous_error: error,
            previous_derivative: derivative,
        },
    ))
}

/// Tuned gains, one row per experimental condition.
const GAIN_BANK: [(f64, f64, f64); 15] = [
    (0.35, 2.39, 0.0186),
    (0.26, 2.39, 0.01),
    (0.429, 2.39, 0.0186),
    (0.54, 12.85, 0.015),
    (0.54, 12.85, 0.015),
    (1.6, 0.0, 0.015),
    (0.629, 8.85, 0.015),
    (0.529, 12.85, 0.015),
    (0.429, 8.85, 0.015),
    (0.429, 8.85, 0.015),
    (0.03, 5e-8, 0.001),
    (0.03, 5e-8, 0.001),
    (0.03, 5e-8, 0.001),
    (0.025, 5e-8, 0.001),
    (0.02, 5e-8, 0.001),
];

/// Gains of tuned controller `id` in 1..=15.
pub fn gain_bank(id: u8) -> Result<PidGains, ControlError> {
    if !(1..=15).contains(&id) {
        return Err(ControlError::UnknownController(id));
    }
    let (kp, ki, kd) = GAIN_BANK[(id - 1) as usize];
    Ok(PidGains { kp, ki, kd })
}

/// Experimental condition a gain-bank row was tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningCondition {
    /// Rows 1-3: end-effector on still porcine tissue.
    EndEffectorStatic,
    /// Rows 4-6: end-effector on the breathing tissue phantom.
    EndEffectorPhantomBreathing,
    /// Rows 7-10: end-effector on breathing porcine tissue.
    EndEffectorPorcineBreathing,
    /// Rows 11-14: robot arm on breathing porcine tissue.
    ArmBreathing,
    /// Row 15: robot arm under the sudden-movement test. Row 2 doubles as
    /// the end-effector side of that test.
    ArmSudden,
}

pub fn gain_condition(id: u8) -> Result<TuningCondition, ControlError> {
    match id {
        1..=3 => Ok(TuningCondition::EndEffectorStatic),
        4..=6 => Ok(TuningCondition::EndEffectorPhantomBreathing),
        7..=10 => Ok(TuningCondition::EndEffectorPorcineBreathing),
        11..=14 => Ok(TuningCondition::ArmBreathing),
        15 => Ok(TuningCondition::ArmSudden),
        other => Err(ControlError::UnknownController(other)),
    }
}

/// The gain bank as an aligned text table.
pub fn gain_table_text() -> String {
    fn fmt(v: f64) -> String {
        if v != 0.0 && v.abs() < 1e-4 {
            format!("{v:e}")
        } else {
            format!("{v}")
        }
    }
    let mut out = String::from("controller  kp      ki      kd\n");
    for (i, (kp, ki, kd)) in GAIN_BANK.iter().enumerate() {
        out.push_str(&format!(
            "{:<11} {:<7} {:<7} {}\n",
            i + 1,
            fmt(*kp),
            fmt(*ki),
            fmt(*kd)
        ));
    }
    out
}

/// Current-based force control of the end-effector: the PID output is the
/// motor torque command, clamped to the rated torque by the config.
pub fn end_effector_force_controller(
    target: f64,
    measured: f64,
    state: &PidState,
    config: &PidConfig,
) -> Result<(f64, PidState), ControlError> {
    pid_step(state, config, target - measured)
}

/// Position-based force control of the arm: the scaled, step-limited PID
/// output advances the commanded position. `current_pos` is the previously
/// commanded setpoint.
pub fn arm_force_controller(
    target: f64,
    measured: f64,
    state: &PidState,
    config: &PidConfig,
    current_pos: f64,
) -> Result<(f64, PidState), ControlError> {
    let (out, next) = pid_step(state, config, target - measured)?;
    let delta =
        (ARM_SETPOINT_SCALE_M * out).clamp(-ARM_SETPOINT_STEP_LIMIT_M, ARM_SETPOINT_STEP_LIMIT_M);
    Ok((current_pos + delta, next))
}

/// Classic Ziegler-Nichols PID rule from the ultimate gain and period:
/// `kp = 0.6 Ku`, `ki = 1.2 Ku / Tu`, `kd = 0.075 Ku Tu`.
pub fn ziegler_nichols(ultimate_gain: f64, ultimate_period: f64) -> Result<PidGains, ControlError> {
    if !(ultimate_gain > 0.0 && ultimate_period > 0.0) {
        return Err(ControlError::NonPositiveTuningInput {
            ku: ultimate_gain,
            tu: ultimate_period,
        });
    }
    Ok(PidGains {
        kp: 0.6 * ultimate_gain,
        ki: 1.2 * ultimate_gain / ultimate_period,
        kd: 0.075 * ultimate_gain * ultimate_period,
    })
}
