//! Scenario definitions: which plant, which controller, which motion, how
//! long, and under what seed.

use crate::control::{gain_bank, ControlError, PidGains};
use crate::plant::{MotionProfile, TissueModel};
use crate::rng::{mix64, SplitMix64};
use crate::simengine::{LoopSchedule, SensorModel, SimError};
use serde::{Deserialize, Serialize};

/// Ceiling on commandable force: the rated torque through the stock pulley.
pub const MAX_TARGET_FORCE_N: f64 = 62.2;

/// Default multiplicative stiffness spread of ex vivo porcine tissue.
pub const PORCINE_HETEROGENEITY: f64 = 0.2;

const TISSUE_STREAM_SALT: u64 = 0x5449_5353;

/// Which force-control architecture runs the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    EndEffector,
    Arm,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Architecture::EndEffector => write!(f, "end_effector"),
            Architecture::Arm => write!(f, "arm"),
        }
    }
}

/// Tissue under the probe. `custom` carries explicit contact parameters and
/// a heterogeneity fraction applied multiplicatively to the stiffness per
/// replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueSelection {
    Phantom,
    Porcine,
    Custom {
        #[serde(flatten)]
        model: TissueModel,
        #[serde(default)]
        heterogeneity: f64,
    },
}

impl TissueSelection {
    fn base(&self) -> TissueModel {
        match self {
            TissueSelection::Phantom => TissueModel::phantom(),
            TissueSelection::Porcine => TissueModel::porcine(),
            TissueSelection::Custom { model, .. } => *model,
        }
    }

    fn heterogeneity(&self) -> f64 {
        match self {
            TissueSelection::Phantom => 0.0,
            TissueSelection::Porcine => PORCINE_HETEROGENEITY,
            TissueSelection::Custom { heterogeneity, .. } => *heterogeneity,
        }
    }

    /// Tissue parameters for one replicate: stiffness scaled by a factor
    /// drawn uniformly from `1 +/- heterogeneity` out of the replicate's
    /// tissue stream.
    pub fn resolve(&self, replicate_seed: u64) -> TissueModel {
        let mut model = self.base();
        let h = self.heterogeneity();
        if h > 0.0 {
            let mut rng = SplitMix64::new(mix64(replicate_seed ^ TISSUE_STREAM_SALT));
            let factor = 1.0 + h * (2.0 * rng.next_f64() - 1.0);
            model.stiffness *= factor;
        }
        model
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if let TissueSelection::Custom {
            model,
            heterogeneity,
        } = self
        {
            model
                .validate()
                .map_err(|e| SimError::Scenario(e.to_string()))?;
            if !(0.0..1.0).contains(heterogeneity) {
                return Err(SimError::Scenario(format!(
                    "heterogeneity must lie in [0, 1), got {heterogeneity}"
                )));
            }
        }
        Ok(())
    }
}

/// Either a tuned gain-bank row or explicit gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControllerSelection {
    Id(u8),
    Gains(PidGains),
}

impl ControllerSelection {
    pub fn gains(&self) -> Result<PidGains, ControlError> {
        match self {
            ControllerSelection::Id(id) => gain_bank(*id),
            ControllerSelection::Gains(g) => {
                g.validate()?;
                Ok(*g)
            }
        }
    }
}

fn default_replicates() -> u32 {
    1
}

/// One force-tracking run: plant variant, tissue, motion, target, duration,
/// controller, loop rates, and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub architecture: Architecture,
    pub tissue: TissueSelection,
    pub profile: MotionProfile,
    /// Commanded contact force, N.
    pub target_force: f64,
    /// Run length, s.
    pub duration: f64,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    pub controller: ControllerSelection,
    #[serde(default)]
    pub schedule: LoopSchedule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sensor: SensorModel,
    /// Seconds dropped from the head of each trace before computing
    /// metrics; defaults to 1 s for static profiles and 0 otherwise.
    #[serde(default)]
    pub transient_cut: Option<f64>,
    /// Pass torque commands through the wire codec.
    #[serde(default)]
    pub codec_in_loop: bool,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.name.is_empty() {
            return Err(SimError::Scenario("scenario name is empty".into()));
        }
        if !(self.target_force > 0.0 && self.target_force <= MAX_TARGET_FORCE_N) {
            return Err(SimError::Scenario(format!(
                "target_force must lie in (0, {MAX_TARGET_FORCE_N}] N, got {}",
                self.target_force
            )));
        }
        if !(self.duration > 0.0) {
            return Err(SimError::Scenario(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.replicates < 1 {
            return Err(SimError::Scenario("replicates must be at least 1".into()));
        }
        if let Some(cut) = self.transient_cut {
            if !(0.0..self.duration).contains(&cut) {
                return Err(SimError::Scenario(format!(
                    "transient_cut {cut} must lie in [0, duration)"
                )));
            }
        }
        self.tissue.validate()?;
        self.profile
            .validate()
            .map_err(|e| SimError::Scenario(e.to_string()))?;
        self.controller
            .gains()
            .map_err(|e| SimError::Scenario(e.to_string()))?;
        self.sensor.validate()?;
        self.schedule.validate()?;
        Ok(())
    }

    /// Transient cut actually applied to metrics.
    pub fn effective_transient_cut(&self) -> f64 {
        self.transient_cut.unwrap_or(match self.profile {
            MotionProfile::Static => 1.0,
            _ => 0.0,
        })
    }
}

/// The full built-in experiment matrix with the default master seed.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    builtin_scenarios_seeded(0)
}

/// Built-in matrix, 16 scenarios:
/// end-effector static 2.5/5/10 N (controllers 1-3), end-effector on the
/// breathing phantom 2.5/5/10 N (4-6), end-effector on breathing porcine
/// 2.5/5/10/15 N (7-10), arm on breathing porcine 2.5/5/10/15 N (11-14),
/// and the sudden-movement pair at 5 N (end-effector controller 2, arm
/// controller 15). Eight seconds each, three replicates except the sudden
/// pair which runs once.
pub fn builtin_scenarios_seeded(master_seed: u64) -> Vec<ScenarioSpec> {
    let mut specs = Vec::with_capacity(16);
    let mut push = |name: String,
                    architecture: Architecture,
                    tissue: TissueSelection,
                    profile: MotionProfile,
                    target: f64,
                    controller: u8,
                    replicates: u32| {
        let index = specs.len() as u64;
        specs.push(ScenarioSpec {
            name,
            architecture,
            tissue,
            profile,
            target_force: target,
            duration: 8.0,
            replicates,
            controller: ControllerSelection::Id(controller),
            schedule: LoopSchedule::default(),
            seed: mix64(master_seed ^ mix64(index)),
            sensor: SensorModel::default(),
            transient_cut: None,
            codec_in_loop: false,
        });
    };

    for (target, controller) in [(2.5, 1u8), (5.0, 2), (10.0, 3)] {
        push(
            format!("ee-static-{target}N"),
            Architecture::EndEffector,
            TissueSelection::Porcine,
            MotionProfile::Static,
            target,
            controller,
            3,
        );
    }
    for (target, controller) in [(2.5, 4u8), (5.0, 5), (10.0, 6)] {
        push(
            format!("ee-phantom-breathing-{target}N"),
            Architecture::EndEffector,
            TissueSelection::Phantom,
            MotionProfile::quiet_breathing(),
            target,
            controller,
            3,
        );
    }
    for (target, controller) in [(2.5, 7u8), (5.0, 8), (10.0, 9), (15.0, 10)] {
        push(
            format!("ee-porcine-breathing-{target}N"),
            Architecture::EndEffector,
            TissueSelection::Porcine,
            MotionProfile::quiet_breathing(),
            target,
            controller,
            3,
        );
    }
    for (target, controller) in [(2.5, 11u8), (5.0, 12), (10.0, 13), (15.0, 14)] {
        push(
            format!("arm-porcine-breathing-{target}N"),
            Architecture::Arm,
            TissueSelection::Porcine,
            MotionProfile::quiet_breathing(),
            target,
            controller,
            3,
        );
    }
    // Pulse onset sits mid sample interval: the pulse starts with a
    // velocity jump, and sampling exactly on that edge is a knife-edge
    // that flips with floating-point time accumulation.
    push(
        "ee-porcine-sudden-5N".into(),
        Architecture::EndEffector,
        TissueSelection::Porcine,
        MotionProfile::sudden_20mm(2.005),
        5.0,
        2,
        1,
    );
    push(
        "arm-porcine-sudden-5N".into(),
        Architecture::Arm,
        TissueSelection::Porcine,
        MotionProfile::sudden_20mm(2.005),
        5.0,
        15,
        1,
    );
    specs
}
