//! Deterministic discrete-time simulation testbed for force-controlled
//! robotic ultrasound: a compliant quasi-direct-drive end-effector and a
//! conventional rigid-arm servo pressing an ultrasound probe against moving
//! tissue.
//!
//! The crate models the belt transmission ([`kinematics`]), the actuator,
//! contact, and platform physics ([`plant`]), discrete PID force control in
//! both current-based and position-based architectures ([`control`]), the
//! multi-rate execution loop ([`simengine`]), the wire codec and bus budget
//! of the drive link ([`protocol`]), and the experiment harness with
//! scenarios, metrics, reports, and frequency sweeps ([`harness`]).
//!
//! Every run is a pure function of its scenario and seed: traces are
//! bitwise reproducible across processes and thread counts.

// Validation sites use `!(x > 0.0)` on purpose: the negation also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod harness;
pub mod kinematics;
pub mod plant;
pub mod protocol;
pub mod rng;
pub mod simengine;

pub use control::{
    arm_force_controller, end_effector_force_controller, gain_bank, gain_condition,
    gain_table_text, pid_step, ziegler_nichols, ControlError, PidConfig, PidGains, PidState,
    TuningCondition,
};
pub use harness::{
    builtin_scenarios, builtin_scenarios_seeded, compute_metrics, find_ultimate_gain,
    measure_bandwidth, run_matrix, Architecture, ControllerSelection, HarnessError, Metrics,
    ReportRow, ScenarioSpec, TissueSelection, UltimateGain,
};
pub use kinematics::{KinematicsError, TransmissionGeometry};
pub use plant::{
    contact_force, ActuatorModel, ArmPlant, ArmServoModel, CarriageModel, EndEffectorPlant,
    MotionProfile, PlantError, PlantState, TissueModel,
};
pub use protocol::{
    bus_budget, decode_command, decode_telemetry, encode_command, encode_telemetry, CodecError,
    CodecRanges, CommandFrame, TelemetryFrame,
};
pub use simengine::{
    run_replicate, run_replicates, run_scenario, run_with_reference, LoopSchedule, SensorModel,
    SimError, SimTrace, TraceSample,
};
