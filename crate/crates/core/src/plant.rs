//! Continuous-time plant models: the compliant belt-drive end-effector, the
//! rigid robot-arm servo, the unilateral tissue contact law, and the actuated
//! platform motion profiles.
//!
//! Conventions. The carriage extension `probe_position` grows toward the
//! patient and is confined to `[0, travel_limit]`. The contact law works on
//! an axis pointing from the tissue toward the device mount: on that axis the
//! probe tip sits at `-probe_position` and the resting tissue surface at
//! `platform_position - surface_rest_position`, so penetration is
//! `probe_position + platform_position - surface_rest_position`.
//! `surface_rest_position` is therefore the extension at which the probe
//! first touches the resting tissue.
//!
//! Both step functions are pure state transitions (state in, state out) and
//! integrate with semi-implicit Euler; the stiff smoothed-Coulomb friction
//! term is solved implicitly inside the velocity update so the boundary
//! layer does not chatter at the default step size.

use crate::kinematics::{TransmissionGeometry, DEFAULT_TRAVEL_LIMIT_M};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Velocity scale of the tanh-smoothed Coulomb friction, rad/s.
pub const FRICTION_VELOCITY_EPS_RAD_S: f64 = 1e-3;

/// Damping ratio of the arm's structural mode (flange-to-probe coupling).
pub const ARM_STRUCTURAL_DAMPING_RATIO: f64 = 0.4;

/// Damping ratio of the optional elastic belt coupling.
pub const BELT_DAMPING_RATIO: f64 = 0.3;

/// Default integration step, seconds.
pub const DEFAULT_PHYSICS_DT_S: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("non-finite plant input or state at t = {time} s")]
    NonFinite { time: f64 },
    #[error("invalid plant parameter: {0}")]
    InvalidParameter(String),
}

/// Quasi-direct-drive actuator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorModel {
    /// Torque limit, N*m.
    pub rated_torque: f64,
    /// Coulomb friction magnitude at the output, N*m.
    pub backdrive_friction_torque: f64,
    /// Rotor plus drivetrain inertia reflected to the pulley shaft, kg*m^2.
    pub reflected_inertia: f64,
    /// Viscous drag coefficient, N*m*s/rad.
    pub viscous_damping: f64,
}

impl Default for ActuatorModel {
    fn default() -> Self {
        Self {
            rated_torque: 3.0,
            backdrive_friction_torque: 0.2,
            reflected_inertia: 0.014,
            viscous_damping: 0.01,
        }
    }
}

impl ActuatorModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.rated_torque > 0.0) {
            return Err(PlantError::InvalidParameter(format!(
                "rated_torque must be positive, got {}",
                self.rated_torque
            )));
        }
        if !(self.backdrive_friction_torque >= 0.0
            && self.backdrive_friction_torque < self.rated_torque)
        {
            return Err(PlantError::InvalidParameter(format!(
                "backdrive_friction_torque must lie in [0, rated_torque), got {}",
                self.backdrive_friction_torque
            )));
        }
        if !(self.reflected_inertia > 0.0) {
            return Err(PlantError::InvalidParameter(format!(
                "reflected_inertia must be positive, got {}",
                self.reflected_inertia
            )));
        }
        if !(self.viscous_damping >= 0.0) {
            return Err(PlantError::InvalidParameter(format!(
                "viscous_damping must be non-negative, got {}",
                self.viscous_damping
            )));
        }
        Ok(())
    }

    /// Signed friction torque applied to the shaft at angular velocity
    /// `omega`: always opposes motion, `friction(omega) * omega <= 0`.
    pub fn friction_torque(&self, omega: f64) -> f64 {
        -(self.backdrive_friction_torque * (omega / FRICTION_VELOCITY_EPS_RAD_S).tanh()
            + self.viscous_damping * omega)
    }
}

/// Moving carriage of the linear slide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarriageModel {
    /// Mass of the translating assembly, kg.
    pub moving_mass: f64,
    /// Probe travel range, m.
    pub travel_limit: f64,
    pub geometry: TransmissionGeometry,
    /// Belt elasticity as a series spring between pulley and carriage,
    /// N/m. `None` couples them rigidly.
    pub belt_stiffness: Option<f64>,
}

impl Default for CarriageModel {
    fn default() -> Self {
        Self {
            moving_mass: 0.25,
            travel_limit: DEFAULT_TRAVEL_LIMIT_M,
            geometry: TransmissionGeometry::stock(),
            belt_stiffness: None,
        }
    }
}

impl CarriageModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.moving_mass > 0.0) {
            return Err(PlantError::InvalidParameter(format!(
                "moving_mass must be positive, got {}",
                self.moving_mass
            )));
        }
        if !(self.travel_limit > 0.0) {
            return Err(PlantError::InvalidParameter(format!(
                "travel_limit must be positive, got {}",
                self.travel_limit
            )));
        }
        if let Some(k) = self.belt_stiffness {
            if !(k > 0.0) {
                return Err(PlantError::InvalidParameter(format!(
                    "belt_stiffness must be positive when set, got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Lumped Kelvin-Voigt tissue parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueModel {
    /// Contact stiffness, N/m.
    pub stiffness: f64,
    /// Contact damping, N*s/m.
    pub damping: f64,
    /// Carriage extension at which the probe touches the resting surface, m.
    pub surface_rest_position: f64,
}

impl TissueModel {
    /// Homogeneous gellan-gum phantom defaults.
    pub fn phantom() -> Self {
        Self {
            stiffness: 2000.0,
            damping: 35.0,
            surface_rest_position: 0.015,
        }
    }

    /// Nominal ex vivo porcine abdominal wall defaults. Per-run
    /// heterogeneity is applied by the scenario layer on top of these.
    pub fn porcine() -> Self {
        Self {
            stiffness: 1500.0,
            damping: 35.0,
            surface_rest_position: 0.015,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.stiffness > 0.0) {
            return Err(PlantError::InvalidParameter(format!(
                "tissue stiffness must be positive, got {}",
                self.stiffness
            )));
        }
        if !(self.damping >= 0.0) {
            return Err(PlantError::InvalidParameter(format!(
                "tissue damping must be non-negative, got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Platform displacement profile driving the tissue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionProfile {
    /// Platform held still.
    Static,
    /// Sinusoidal breathing motion `A sin(2 pi f t)`.
    Breathing { amplitude: f64, frequency: f64 },
    /// Single half-sine bump: quarter-sine up over `rise`, quarter-cosine
    /// down over `fall`, smooth at the peak, zero elsewhere.
    SuddenPulse {
        amplitude: f64,
        rise: f64,
        fall: f64,
        onset: f64,
    },
    /// Sum of sub-profiles.
    Composite(Vec<MotionProfile>),
}

impl MotionProfile {
    /// Quiet supine breathing: 9.9 mm at 14.6 cycles per minute.
    pub fn quiet_breathing() -> Self {
        MotionProfile::Breathing {
            amplitude: 0.0099,
            frequency: 14.6 / 60.0,
        }
    }

    /// Sudden 20 mm displacement with 0.25 s rise and 0.25 s fall.
    pub fn sudden_20mm(onset: f64) -> Self {
        MotionProfile::SuddenPulse {
            amplitude: 0.020,
            rise: 0.25,
            fall: 0.25,
            onset,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        match self {
            MotionProfile::Static => Ok(()),
            MotionProfile::Breathing {
                amplitude,
                frequency,
            } => {
                if !(*amplitude >= 0.0) {
                    return Err(PlantError::InvalidParameter(format!(
                        "breathing amplitude must be non-negative, got {amplitude}"
                    )));
                }
                if !(*frequency > 0.0) {
                    return Err(PlantError::InvalidParameter(format!(
                        "breathing frequency must be positive, got {frequency}"
                    )));
                }
                Ok(())
            }
            MotionProfile::SuddenPulse {
                amplitude,
                rise,
                fall,
                onset,
            } => {
                if !(*amplitude >= 0.0) {
                    return Err(PlantError::InvalidParameter(format!(
                        "pulse amplitude must be non-negative, got {amplitude}"
                    )));
                }
                if !(*rise > 0.0 && *fall > 0.0) {
                    return Err(PlantError::InvalidParameter(format!(
                        "pulse rise and fall must be positive, got {rise} and {fall}"
                    )));
                }
                if !(*onset >= 0.0) {
                    return Err(PlantError::InvalidParameter(format!(
                        "pulse onset must be non-negative, got {onset}"
                    )));
                }
                Ok(())
            }
            MotionProfile::Composite(parts) => {
                for p in parts {
                    p.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Platform position and velocity at time `t >= 0`.
    pub fn sample(&self, t: f64) -> (f64, f64) {
        match self {
            MotionProfile::Static => (0.0, 0.0),
            MotionProfile::Breathing {
                amplitude,
                frequency,
            } => {
                let w = 2.0 * std::f64::consts::PI * frequency;
                (amplitude * (w * t).sin(), amplitude * w * (w * t).cos())
            }
            MotionProfile::SuddenPulse {
                amplitude,
                rise,
                fall,
                onset,
            } => {
                let dt = t - onset;
                if dt < 0.0 || dt >= rise + fall {
                    (0.0, 0.0)
                } else if dt < *rise {
                    let w = std::f64::consts::PI / (2.0 * rise);
                    (amplitude * (w * dt).sin(), amplitude * w * (w * dt).cos())
                } else {
                    let w = std::f64::consts::PI / (2.0 * fall);
                    let tf = dt - rise;
                    (amplitude * (w * tf).cos(), -amplitude * w * (w * tf).sin())
                }
            }
            MotionProfile::Composite(parts) => parts.iter().fold((0.0, 0.0), |acc, p| {
                let (x, v) = p.sample(t);
                (acc.0 + x, acc.1 + v)
            }),
        }
    }
}

/// First-order servo abstraction of the rigid robot arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmServoModel {
    /// Setpoint latch rate, Hz.
    pub command_rate: f64,
    /// Cartesian speed limit, m/s.
    pub velocity_limit: f64,
    /// Cartesian acceleration limit, m/s^2.
    pub acceleration_limit: f64,
    /// First-order tracking lag, s.
    pub tracking_time_constant: f64,
    /// Mass lumped at the probe behind the structural spring, kg.
    pub effective_end_mass: f64,
    /// Flange-to-probe structural stiffness, N/m.
    pub structural_stiffness: f64,
}

impl Default for ArmServoModel {
    fn default() -> Self {
        Self {
            command_rate: 125.0,
            velocity_limit: 0.25,
            acceleration_limit: 2.5,
            tracking_time_constant: 0.05,
            effective_end_mass: 2.0,
            structural_stiffness: 5e4,
        }
    }
}

impl ArmServoModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        for (name, v) in [
            ("command_rate", self.command_rate),
            ("velocity_limit", self.velocity_limit),
            ("acceleration_limit", self.acceleration_limit),
            ("tracking_time_constant", self.tracking_time_constant),
            ("effective_end_mass", self.effective_end_mass),
            ("structural_stiffness", self.structural_stiffness),
        ] {
            if !(v > 0.0) {
                return Err(PlantError::InvalidParameter(format!(
                    "arm servo {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn structural_damping(&self) -> f64 {
        2.0 * ARM_STRUCTURAL_DAMPING_RATIO
            * (self.structural_stiffness * self.effective_end_mass).sqrt()
    }
}

/// Instantaneous plant state shared by both architectures.
///
/// `theta`/`omega` are the actuator shaft state of the end-effector plant and
/// stay zero for the arm. `flange_position`/`flange_velocity` are the arm's
/// servo flange state and stay zero for the end-effector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub theta: f64,
    pub omega: f64,
    pub probe_position: f64,
    pub probe_velocity: f64,
    pub platform_position: f64,
    pub platform_velocity: f64,
    pub contact_force: f64,
    pub time: f64,
    pub flange_position: f64,
    pub flange_velocity: f64,
}

impl PlantState {
    pub fn is_finite(&self) -> bool {
        self.theta.is_finite()
            && self.omega.is_finite()
            && self.probe_position.is_finite()
            && self.probe_velocity.is_finite()
            && self.platform_position.is_finite()
            && self.platform_velocity.is_finite()
            && self.contact_force.is_finite()
            && self.time.is_finite()
            && self.flange_position.is_finite()
            && self.flange_velocity.is_finite()
    }
}

/// Unilateral Kelvin-Voigt contact force.
///
/// Positions and velocities are measured along the contact axis pointing
/// from the tissue toward the device; penetration is
/// `surface_pos - probe_pos` and the force is
/// `max(0, stiffness * penetration + damping * penetration_rate)` while
/// penetrated, zero otherwise. Never negative: the probe cannot pull.
pub fn contact_force(
    tissue: &TissueModel,
    probe_pos: f64,
    probe_vel: f64,
    surface_pos: f64,
    surface_vel: f64,
) -> f64 {
    let penetration = surface_pos - probe_pos;
    if penetration > 0.0 {
        (tissue.stiffness * penetration + tissue.damping * (surface_vel - probe_vel)).max(0.0)
    } else {
        0.0
    }
}

/// Contact force in carriage coordinates: probe extension `x`, extension
/// rate `v`, platform displacement `p` toward the probe and its rate `pv`.
fn contact_from_extension(tissue: &TissueModel, x: f64, v: f64, p: f64, pv: f64) -> f64 {
    contact_force(tissue, -x, -v, p - tissue.surface_rest_position, pv)
}

/// Compliant belt-drive end-effector plant.
#[derive(Debug, Clone, PartialEq)]
pub struct EndEffectorPlant {
    pub actuator: ActuatorModel,
    pub carriage: CarriageModel,
    pub tissue: TissueModel,
    pub profile: MotionProfile,
}

impl EndEffectorPlant {
    pub fn new(
        actuator: ActuatorModel,
        carriage: CarriageModel,
        tissue: TissueModel,
        profile: MotionProfile,
    ) -> Result<Self, PlantError> {
        actuator.validate()?;
        carriage.validate()?;
        tissue.validate()?;
        profile.validate()?;
        Ok(Self {
            actuator,
            carriage,
            tissue,
            profile,
        })
    }

    /// Shaft-referred inertia of motor plus carriage.
    pub fn effective_inertia(&self) -> f64 {
        let r = self.carriage.geometry.pulley_radius();
        self.actuator.reflected_inertia + self.carriage.moving_mass * r * r
    }

    /// State resting in contact at the given force at time `t`, with the
    /// probe stationary. The holding torque is `r * force`; an elastic belt
    /// carries the matching stretch.
    pub fn equilibrium_state(&self, force: f64, t: f64) -> Result<PlantState, PlantError> {
        let r = self.carriage.geometry.pulley_radius();
        let (p, pv) = self.profile.sample(t);
        let f = force.max(0.0);
        let x = self.tissue.surface_rest_position + f / self.tissue.stiffness - p;
        if !(0.0..=self.carriage.travel_limit).contains(&x) {
            return Err(PlantError::InvalidParameter(format!(
                "equilibrium extension {x} m outside travel [0, {}]",
                self.carriage.travel_limit
            )));
        }
        let stretch = match self.carriage.belt_stiffness {
            Some(k_belt) => f / k_belt,
            None => 0.0,
        };
        Ok(PlantState {
            theta: (x + stretch) / r,
            omega: 0.0,
            probe_position: x,
            probe_velocity: 0.0,
            platform_position: p,
            platform_velocity: pv,
            contact_force: contact_from_extension(&self.tissue, x, 0.0, p, pv),
            time: t,
            flange_position: 0.0,
            flange_velocity: 0.0,
        })
    }

    /// Advance one physics step under the commanded torque.
    pub fn step(
        &self,
        state: &PlantState,
        torque_cmd: f64,
        dt: f64,
    ) -> Result<PlantState, PlantError> {
        self.step_with_external_force(state, torque_cmd, 0.0, dt)
    }

    /// Advance one physics step with an additional external axial force on
    /// the carriage (positive toward extension). Used for backdrivability
    /// experiments; regular scenarios pass zero.
    pub fn step_with_external_force(
        &self,
        state: &PlantState,
        torque_cmd: f64,
        external_force: f64,
        dt: f64,
    ) -> Result<PlantState, PlantError> {
        if !(dt > 0.0) {
            return Err(PlantError::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !state.is_finite() || !torque_cmd.is_finite() || !external_force.is_finite() {
            return Err(PlantError::NonFinite { time: state.time });
        }
        let r = self.carriage.geometry.pulley_radius();
        let tau = torque_cmd.clamp(-self.actuator.rated_torque, self.actuator.rated_torque);

        let f_contact = contact_from_extension(
            &self.tissue,
            state.probe_position,
            state.probe_velocity,
            state.platform_position,
            state.platform_velocity,
        );

        let time = state.time + dt;
        let (p, pv) = self.profile.sample(time);

        let next = match self.carriage.belt_stiffness {
            None => {
                // Rigid belt: carriage rides the shaft, one degree of freedom.
                let j = self.effective_inertia();
                let drive = tau - r * f_contact + r * external_force;
                let mut omega = solve_friction_velocity(
                    state.omega,
                    drive,
                    j,
                    self.actuator.backdrive_friction_torque,
                    self.actuator.viscous_damping,
                    dt,
                );
                let mut theta = state.theta + dt * omega;

                // Hard travel stops: clamp position, kill velocity.
                let theta_max = self.carriage.travel_limit / r;
                if theta < 0.0 {
                    theta = 0.0;
                    omega = 0.0;
                } else if theta > theta_max {
                    theta = theta_max;
                    omega = 0.0;
                }

                let x = r * theta;
                let v = r * omega;
                PlantState {
                    theta,
                    omega,
                    probe_position: x,
                    probe_velocity: v,
                    platform_position: p,
                    platform_velocity: pv,
                    contact_force: contact_from_extension(&self.tissue, x, v, p, pv),
                    time,
                    flange_position: 0.0,
                    flange_velocity: 0.0,
                }
            }
            Some(k_belt) => {
                // Elastic belt: the carriage is its own mass behind the
                // belt spring, which is what absorbs impacts.
                let m = self.carriage.moving_mass;
                let c_belt = 2.0
                    * BELT_DAMPING_RATIO
                    * (k_belt * m).sqrt();
                let f_belt = k_belt * (r * state.theta - state.probe_position)
                    + c_belt * (r * state.omega - state.probe_velocity);

                let drive = tau - r * f_belt;
                let omega = solve_friction_velocity(
                    state.omega,
                    drive,
                    self.actuator.reflected_inertia,
                    self.actuator.backdrive_friction_torque,
                    self.actuator.viscous_damping,
                    dt,
                );
                let theta = state.theta + dt * omega;

                let mut v = state.probe_velocity
                    + dt * (f_belt - f_contact + external_force) / m;
                let mut x = state.probe_position + dt * v;
                if x < 0.0 {
                    x = 0.0;
                    v = 0.0;
                } else if x > self.carriage.travel_limit {
                    x = self.carriage.travel_limit;
                    v = 0.0;
                }

                PlantState {
                    theta,
                    omega,
                    probe_position: x,
                    probe_velocity: v,
                    platform_position: p,
                    platform_velocity: pv,
                    contact_force: contact_from_extension(&self.tissue, x, v, p, pv),
                    time,
                    flange_position: 0.0,
                    flange_velocity: 0.0,
                }
            }
        };
        if !next.is_finite() {
            return Err(PlantError::NonFinite { time });
        }
        Ok(next)
    }
}

/// Rigid-arm plant: kinematic servo flange driving the probe mass through
/// the structural stiffness.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPlant {
    pub servo: ArmServoModel,
    pub tissue: TissueModel,
    pub profile: MotionProfile,
}

impl ArmPlant {
    pub fn new(
        servo: ArmServoModel,
        tissue: TissueModel,
        profile: MotionProfile,
    ) -> Result<Self, PlantError> {
        servo.validate()?;
        tissue.validate()?;
        profile.validate()?;
        Ok(Self {
            servo,
            tissue,
            profile,
        })
    }

    /// Contact stiffness of tissue and arm structure in series.
    pub fn series_stiffness(&self) -> f64 {
        let kt = self.tissue.stiffness;
        let ks = self.servo.structural_stiffness;
        kt * ks / (kt + ks)
    }

    /// State resting in contact at the given force at time `t`: probe at the
    /// tissue equilibrium, flange advanced by the structural deflection.
    pub fn equilibrium_state(&self, force: f64, t: f64) -> Result<PlantState, PlantError> {
        let (p, pv) = self.profile.sample(t);
        let f = force.max(0.0);
        let x = self.tissue.surface_rest_position + f / self.tissue.stiffness - p;
        let flange = x + f / self.servo.structural_stiffness;
        Ok(PlantState {
            theta: 0.0,
            omega: 0.0,
            probe_position: x,
            probe_velocity: 0.0,
            platform_position: p,
            platform_velocity: pv,
            contact_force: contact_from_extension(&self.tissue, x, 0.0, p, pv),
            time: t,
            flange_position: flange,
            flange_velocity: 0.0,
        })
    }

    /// Advance one physics step toward the latched position command.
    pub fn step(
        &self,
        state: &PlantState,
        position_cmd: f64,
        dt: f64,
    ) -> Result<PlantState, PlantError> {
        if !(dt > 0.0) {
            return Err(PlantError::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !state.is_finite() || !position_cmd.is_finite() {
            return Err(PlantError::NonFinite { time: state.time });
        }
        let m = self.servo.effective_end_mass;
        let ks = self.servo.structural_stiffness;
        let cs = self.servo.structural_damping();

        let f_contact = contact_from_extension(
            &self.tissue,
            state.probe_position,
            state.probe_velocity,
            state.platform_position,
            state.platform_velocity,
        );
        let f_link = ks * (state.flange_position - state.probe_position)
            + cs * (state.flange_velocity - state.probe_velocity);
        let probe_vel = state.probe_velocity + dt * (f_link - f_contact) / m;
        let probe_pos = state.probe_position + dt * probe_vel;

        // Flange: rate- and acceleration-limited first-order lag.
        let v_des = ((position_cmd - state.flange_position) / self.servo.tracking_time_constant)
            .clamp(-self.servo.velocity_limit, self.servo.velocity_limit);
        let max_dv = self.servo.acceleration_limit * dt;
        let flange_vel =
            state.flange_velocity + (v_des - state.flange_velocity).clamp(-max_dv, max_dv);
        let flange_pos = state.flange_position + dt * flange_vel;

        let time = state.time + dt;
        let (p, pv) = self.profile.sample(time);
        let next = PlantState {
            theta: 0.0,
            omega: 0.0,
            probe_position: probe_pos,
            probe_velocity: probe_vel,
            platform_position: p,
            platform_velocity: pv,
            contact_force: contact_from_extension(&self.tissue, probe_pos, probe_vel, p, pv),
            time,
            flange_position: flange_pos,
            flange_velocity: flange_vel,
        };
        if !next.is_finite() {
            return Err(PlantError::NonFinite { time });
        }
        Ok(next)
    }
}

/// Implicit velocity update for `J w' = drive - bd * tanh(w/eps) - b * w`.
///
/// The friction boundary layer has an effective time constant far below the
/// integration step, so the dissipative terms are evaluated at the end of
/// the step. The root of the monotone residual is found by safeguarded
/// Newton iteration inside a sign-derived bracket.
fn solve_friction_velocity(omega0: f64, drive: f64, j: f64, bd: f64, b: f64, dt: f64) -> f64 {
    let a = dt / j;
    let target = omega0 + a * drive;
    let residual =
        |w: f64| w * (1.0 + a * b) + a * bd * (w / FRICTION_VELOCITY_EPS_RAD_S).tanh() - target;
    // tanh stays inside (-1, 1), so the root lies strictly inside
    // [(target - a*bd) / (1 + a*b), (target + a*bd) / (1 + a*b)], and the
    // residual's sign at zero pins the root on the side of the target.
    let mut lo = (target - a * bd) / (1.0 + a * b);
    let mut hi = (target + a * bd) / (1.0 + a * b);
    if target > 0.0 {
        lo = lo.max(0.0);
    } else if target < 0.0 {
        hi = hi.min(0.0);
    } else {
        return 0.0;
    }
    let mut w = 0.5 * (lo + hi);
    for _ in 0..60 {
        let f = residual(w);
        if f > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let sech2 = {
            let c = (w / FRICTION_VELOCITY_EPS_RAD_S).cosh();
            1.0 / (c * c)
        };
        let df = 1.0 + a * b + a * bd / FRICTION_VELOCITY_EPS_RAD_S * sech2;
        let newton = w - f / df;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - w).abs() <= 1e-15 * (1.0 + w.abs()) {
            w = next;
            break;
        }
        w = next;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const DT: f64 = 1e-4;

    fn phantom_plant(profile: MotionProfile) -> EndEffectorPlant {
        EndEffectorPlant::new(
            ActuatorModel::default(),
            CarriageModel::default(),
            TissueModel::phantom(),
            profile,
        )
        .unwrap()
    }

    #[test]
    fn breathing_profile_values() {
        let p = MotionProfile::quiet_breathing();
        let (x0, v0) = p.sample(0.0);
        assert_eq!(x0, 0.0);
        // Analytic derivative at t = 0: A * 2 pi f = 0.015137 m/s.
        let expected = 0.0099 * 2.0 * PI * (14.6 / 60.0);
        assert!((v0 - expected).abs() < 1e-12);
        assert!((expected - 0.01514).abs() < 1e-5);
        // One period is 60/14.6 s, so 8 s covers just under two cycles.
        let period: f64 = 60.0 / 14.6;
        assert!((8.0 / period - 1.946_f64).abs() < 1e-3);
        let (xp, _) = p.sample(period);
        assert!(xp.abs() < 1e-12);
    }

    #[test]
    fn sudden_pulse_shape() {
        let p = MotionProfile::sudden_20mm(1.0);
        assert_eq!(p.sample(0.5), (0.0, 0.0));
        let (peak, vpeak) = p.sample(1.25);
        assert!((peak - 0.020).abs() < 1e-12);
        assert!(vpeak.abs() < 1e-12, "peak must be smooth, got {vpeak}");
        let (end, _) = p.sample(1.4999);
        assert!(end > 0.0);
        assert_eq!(p.sample(1.5), (0.0, 0.0));
        // Continuity across the peak.
        let (a, va) = p.sample(1.25 - 1e-9);
        let (b, vb) = p.sample(1.25 + 1e-9);
        assert!((a - b).abs() < 1e-10);
        assert!((va - vb).abs() < 1e-6);
    }

    #[test]
    fn composite_profile_sums() {
        let p = MotionProfile::Composite(vec![
            MotionProfile::quiet_breathing(),
            MotionProfile::sudden_20mm(2.0),
        ]);
        let (x, v) = p.sample(2.125);
        let (xb, vb) = MotionProfile::quiet_breathing().sample(2.125);
        let (xs, vs) = MotionProfile::sudden_20mm(2.0).sample(2.125);
        assert_eq!(x, xb + xs);
        assert_eq!(v, vb + vs);
    }

    #[test]
    fn contact_force_examples() {
        let tissue = TissueModel {
            stiffness: 2000.0,
            damping: 0.0,
            surface_rest_position: 0.015,
        };
        // No penetration, no force.
        assert_eq!(contact_force(&tissue, 0.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(contact_force(&tissue, 0.01, 0.0, 0.0, 0.0), 0.0);
        // k = 2000 N/m at 2.5 mm penetration: 5 N.
        let f = contact_force(&tissue, -0.0025, 0.0, 0.0, 0.0);
        assert!((f - 5.0).abs() < 1e-12);
        // Fast retraction inside contact clamps at zero, never adhesive.
        let damped = TissueModel {
            damping: 100.0,
            ..tissue
        };
        let f = contact_force(&damped, -0.001, 1.0, 0.0, 0.0);
        assert_eq!(f, 0.0);
    }

    #[test]
    fn static_equilibrium_below_friction_holds() {
        let plant = phantom_plant(MotionProfile::Static);
        // Probe parked short of the tissue, zero torque: nothing moves.
        let mut s = PlantState {
            theta: 0.1,
            omega: 0.0,
            probe_position: 0.1 * 0.04825,
            probe_velocity: 0.0,
            platform_position: 0.0,
            platform_velocity: 0.0,
            contact_force: 0.0,
            time: 0.0,
            flange_position: 0.0,
            flange_velocity: 0.0,
        };
        for _ in 0..1000 {
            s = plant.step(&s, 0.0, DT).unwrap();
        }
        assert_eq!(s.theta, 0.1);
        assert_eq!(s.omega, 0.0);
        assert_eq!(s.contact_force, 0.0);
        assert!((s.time - 0.1).abs() < 1e-9);
    }

    #[test]
    fn constant_torque_settles_at_force_balance() {
        // tau = r * 5 N against the phantom: contact force converges to
        // 5 N within the friction band 0.2 Nm / r.
        let plant = phantom_plant(MotionProfile::Static);
        let r = plant.carriage.geometry.pulley_radius();
        let tau = r * 5.0;
        let mut s = plant.equilibrium_state(0.0, 0.0).unwrap();
        for _ in 0..60_000 {
            s = plant.step(&s, tau, DT).unwrap();
        }
        let band = plant.actuator.backdrive_friction_torque / r;
        assert!(
            (s.contact_force - 5.0).abs() <= band,
            "settled at {} N, band {band}",
            s.contact_force
        );
        assert!(s.omega.abs() < 1e-2);
    }

    #[test]
    fn backdrive_threshold() {
        let plant = phantom_plant(MotionProfile::Static);
        let r = plant.carriage.geometry.pulley_radius();
        let threshold = plant.actuator.backdrive_friction_torque / r;

        // Below threshold: creep stays under 0.1 mm over 0.5 s.
        let mut s = plant.equilibrium_state(0.0, 0.0).unwrap();
        s.theta = 0.2;
        s.probe_position = 0.2 * r;
        let x0 = s.probe_position;
        for _ in 0..5000 {
            s = plant
                .step_with_external_force(&s, 0.0, 0.5 * threshold, DT)
                .unwrap();
        }
        assert!(
            (s.probe_position - x0).abs() < 1e-4,
            "sub-threshold creep {} m",
            (s.probe_position - x0).abs()
        );

        // 1.5x threshold: at least 1 mm within 0.1 s.
        let mut s2 = plant.equilibrium_state(0.0, 0.0).unwrap();
        s2.theta = 0.2;
        s2.probe_position = 0.2 * r;
        let x0 = s2.probe_position;
        let mut moved_at = None;
        for k in 0..5000 {
            s2 = plant
                .step_with_external_force(&s2, 0.0, 1.5 * threshold, DT)
                .unwrap();
            if (s2.probe_position - x0).abs() >= 1e-3 {
                moved_at = Some(k as f64 * DT);
                break;
            }
        }
        let t = moved_at.expect("supra-threshold push must move the carriage");
        assert!(t <= 0.1, "moved 1 mm only after {t} s");
    }

    #[test]
    fn travel_limits_hold_under_saturated_torque() {
        let plant = phantom_plant(MotionProfile::Static);
        let mut s = plant.equilibrium_state(0.0, 0.0).unwrap();
        for _ in 0..30_000 {
            s = plant.step(&s, 3.0, DT).unwrap();
            assert!(s.probe_position >= 0.0);
            assert!(s.probe_position <= plant.carriage.travel_limit + 1e-12);
        }
        // And retracting pins at zero.
        for _ in 0..30_000 {
            s = plant.step(&s, -3.0, DT).unwrap();
            assert!(s.probe_position >= -1e-12);
        }
        assert_eq!(s.probe_position, 0.0);
    }

    #[test]
    fn friction_velocity_solve_satisfies_the_implicit_equation() {
        let (j, bd, b, dt) = (0.014, 0.2, 0.01, 1e-4);
        let a = dt / j;
        for omega0 in [-8.0, -0.5, -2e-3, 0.0, 1e-4, 0.3, 12.0] {
            for drive in [-2.5, -0.15, -0.05, 0.0, 0.08, 0.9, 3.0] {
                let w = solve_friction_velocity(omega0, drive, j, bd, b, dt);
                let target = omega0 + a * drive;
                let residual =
                    w * (1.0 + a * b) + a * bd * (w / FRICTION_VELOCITY_EPS_RAD_S).tanh() - target;
                assert!(
                    residual.abs() <= 1e-10 * (1.0 + target.abs()),
                    "omega0 {omega0}, drive {drive}: w {w}, residual {residual}"
                );
            }
        }
    }

    #[test]
    fn friction_opposes_motion() {
        let a = ActuatorModel::default();
        for &w in &[-10.0, -1.0, -1e-4, 0.0, 1e-4, 1.0, 10.0] {
            assert!(a.friction_torque(w) * w <= 0.0, "w = {w}");
        }
        assert_eq!(a.friction_torque(0.0), 0.0);
    }

    #[test]
    fn unpowered_energy_decreases() {
        let plant = phantom_plant(MotionProfile::Static);
        let j = plant.effective_inertia();
        let k = plant.tissue.stiffness;
        let g0 = plant.tissue.surface_rest_position;
        // Start moving toward the tissue; energy = kinetic + contact spring.
        let mut s = plant.equilibrium_state(0.0, 0.0).unwrap();
        s.omega = 4.0;
        s.probe_velocity = 4.0 * plant.carriage.geometry.pulley_radius();
        let energy = |s: &PlantState| {
            let pen = (s.probe_position + s.platform_position - g0).max(0.0);
            0.5 * j * s.omega * s.omega + 0.5 * k * pen * pen
        };
        let e0 = energy(&s);
        let mut prev = e0;
        for _ in 0..20_000 {
            s = plant.step(&s, 0.0, DT).unwrap();
            let e = energy(&s);
            assert!(e <= prev + 2e-3 * e0, "energy rose from {prev} to {e}");
            prev = e;
        }
        assert!(prev < 0.05 * e0, "residual energy {prev} of {e0}");
    }

    #[test]
    fn contact_force_never_negative_on_bounce() {
        let plant = phantom_plant(MotionProfile::quiet_breathing());
        let mut s = plant.equilibrium_state(2.0, 0.0).unwrap();
        s.omega = -2.0;
        s.probe_velocity = -2.0 * plant.carriage.geometry.pulley_radius();
        for _ in 0..50_000 {
            s = plant.step(&s, 0.05, DT).unwrap();
            assert!(s.contact_force >= 0.0);
        }
    }

    #[test]
    fn nonfinite_inputs_rejected() {
        let plant = phantom_plant(MotionProfile::Static);
        let s = plant.equilibrium_state(1.0, 0.0).unwrap();
        assert!(matches!(
            plant.step(&s, f64::NAN, DT),
            Err(PlantError::NonFinite { .. })
        ));
        let mut bad = s;
        bad.omega = f64::INFINITY;
        assert!(plant.step(&bad, 0.0, DT).is_err());
        assert!(plant.step(&s, 0.0, 0.0).is_err());
    }

    fn arm_plant(profile: MotionProfile) -> ArmPlant {
        ArmPlant::new(ArmServoModel::default(), TissueModel::porcine(), profile).unwrap()
    }

    #[test]
    fn arm_holds_position_when_commanded_in_place() {
        let plant = arm_plant(MotionProfile::Static);
        let s0 = plant.equilibrium_state(5.0, 0.0).unwrap();
        let cmd = s0.flange_position;
        let mut s = s0;
        for _ in 0..20_000 {
            s = plant.step(&s, cmd, DT).unwrap();
        }
        assert!((s.probe_position - s0.probe_position).abs() < 1e-6);
        assert!(s.probe_velocity.abs() < 1e-6);
        assert!((s.contact_force - 5.0).abs() < 0.01);
    }

    #[test]
    fn arm_step_response_is_first_order() {
        // Generous limits so the pure lag shows: 1 mm step reaches 63.2%
        // after one time constant, within 5%.
        let servo = ArmServoModel {
            velocity_limit: 10.0,
            acceleration_limit: 1e4,
            ..ArmServoModel::default()
        };
        let plant = ArmPlant::new(servo, TissueModel::porcine(), MotionProfile::Static).unwrap();
        let mut s = plant.equilibrium_state(0.0, 0.0).unwrap();
        // No contact: park the probe well short of the tissue.
        s.probe_position = 0.0;
        s.flange_position = 0.0;
        let step = 0.001;
        let tau = plant.servo.tracking_time_constant;
        let steps = (tau / DT).round() as usize;
        for _ in 0..steps {
            s = plant.step(&s, step, DT).unwrap();
        }
        let expected = step * (1.0 - (-1.0_f64).exp());
        let err = (s.probe_position - expected).abs() / expected;
        assert!(err < 0.05, "probe at {} vs {expected}", s.probe_position);
    }

    #[test]
    fn arm_quasi_static_pulse_force_is_series_stiffness_times_intrusion() {
        // Slow pulse, command frozen: peak force tracks the series
        // stiffness of tissue and structure times the intrusion.
        let servo = ArmServoModel::default();
        let profile = MotionProfile::SuddenPulse {
            amplitude: 0.004,
            rise: 2.0,
            fall: 2.0,
            onset: 0.5,
        };
        let plant = ArmPlant::new(servo, TissueModel::porcine(), profile).unwrap();
        let s0 = plant.equilibrium_state(5.0, 0.0).unwrap();
        let cmd = s0.flange_position;
        let mut s = s0;
        let mut peak: f64 = 0.0;
        for _ in 0..((5.0 / DT) as usize) {
            s = plant.step(&s, cmd, DT).unwrap();
            peak = peak.max(s.contact_force);
        }
        let expected = 5.0 + plant.series_stiffness() * 0.004;
        let rel = (peak - expected).abs() / expected;
        assert!(rel < 0.05, "peak {peak} vs quasi-static {expected}");
    }

    #[test]
    fn arm_converges_to_rest() {
        let plant = arm_plant(MotionProfile::Static);
        let mut s = plant.equilibrium_state(3.0, 0.0).unwrap();
        s.probe_velocity = 0.05;
        let cmd = s.flange_position;
        for _ in 0..40_000 {
            s = plant.step(&s, cmd, DT).unwrap();
        }
        assert!(s.probe_velocity.abs() < 1e-5);
        assert!(s.flange_velocity.abs() < 1e-5);
    }

    #[test]
    fn integrator_convergence_on_breathing_contact() {
        // Fixed torque hold against breathing motion: halving dt changes
        // the force trace by well under 0.5% RMS.
        let plant = phantom_plant(MotionProfile::quiet_breathing());
        let r = plant.carriage.geometry.pulley_radius();
        let tau = r * 5.0;
        let run = |dt: f64| -> Vec<f64> {
            let mut s = plant.equilibrium_state(5.0, 0.0).unwrap();
            let per_sample = (0.01 / dt).round() as usize;
            let mut out = Vec::with_capacity(400);
            for _ in 0..400 {
                for _ in 0..per_sample {
                    s = plant.step(&s, tau, dt).unwrap();
                }
                out.push(s.contact_force);
            }
            out
        };
        let coarse = run(1e-4);
        let fine = run(5e-5);
        let rms_diff = (coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / coarse.len() as f64)
            .sqrt();
        let rms = (coarse.iter().map(|a| a * a).sum::<f64>() / coarse.len() as f64).sqrt();
        assert!(
            rms_diff / rms < 0.005,
            "dt refinement moved the trace by {}",
            rms_diff / rms
        );
    }
}
