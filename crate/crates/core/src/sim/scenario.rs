use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{lookup, DynamicsParams, EpisodeTiming, GripperModel, Plant, SimState};

/// Friction coefficient multiplier for the taped variant.
pub const TAPED_FRICTION_SCALE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    RotateToStop,
    AngleGoal,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::RotateToStop => "rotate-to-stop",
            Protocol::AngleGoal => "angle-goal",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotate-to-stop" => Ok(Protocol::RotateToStop),
            "angle-goal" => Ok(Protocol::AngleGoal),
            _ => Err(Error::invalid(format!(
                "unknown protocol {s:?} (expected rotate-to-stop or angle-goal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrictionVariant {
    Nominal,
    Taped,
}

impl FrictionVariant {
    pub fn scale(self) -> f64 {
        match self {
            FrictionVariant::Nominal => 1.0,
            FrictionVariant::Taped => TAPED_FRICTION_SCALE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrictionVariant::Nominal => "nominal",
            FrictionVariant::Taped => "taped",
        }
    }
}

impl std::str::FromStr for FrictionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(FrictionVariant::Nominal),
            "taped" => Ok(FrictionVariant::Taped),
            _ => Err(Error::invalid(format!("unknown friction variant {s:?}"))),
        }
    }
}

/// One episode to simulate.
///
/// Scenario files are TOML:
///
/// ```toml
/// object = "Toothpaste"
/// protocol = "angle-goal"
/// approach_deg = 0.0
/// perturb_deg = 30.0
/// stop_deg = 45.0          # angle-goal only
/// friction = "nominal"     # or "taped"
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub object: String,
    pub protocol: Protocol,
    /// Gripper yaw when grasping, degrees.
    pub approach_deg: f64,
    /// End-effector yaw perturbation after lifting, degrees.
    pub perturb_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_deg: Option<f64>,
    #[serde(default = "default_friction")]
    pub friction: FrictionVariant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub repeat: u32,
}

fn default_friction() -> FrictionVariant {
    FrictionVariant::Nominal
}

impl Scenario {
    /// Long-axis angle from hanging when the recording starts. The object is
    /// lifted level; yaw about the vertical (approach, perturbation) leaves
    /// this angle unchanged.
    pub fn phi_start(&self) -> f64 {
        90.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.perturb_deg.abs() <= 180.0) {
            return Err(Error::Range {
                what: "perturb angle",
                value: self.perturb_deg,
                expected: "[-180, 180]",
            });
        }
        if !(self.approach_deg.abs() < 90.0) {
            return Err(Error::Range {
                what: "approach angle",
                value: self.approach_deg,
                expected: "(-90, 90)",
            });
        }
        match (self.protocol, self.stop_deg) {
            (Protocol::AngleGoal, None) => Err(Error::invalid("angle-goal scenario needs stop_deg")),
            (_, Some(stop)) if !(stop > 0.0 && stop <= 180.0) => Err(Error::Range {
                what: "stop angle",
                value: stop,
                expected: "(0, 180]",
            }),
            _ => Ok(()),
        }
    }

    pub fn plant(&self, cfg: &SimConfig) -> Result<Plant> {
        self.validate()?;
        let object = lookup(&self.object)?.with_friction_scale(self.friction.scale());
        let plant = Plant::new(object, cfg.gripper.clone())
            .with_dynamics(cfg.dynamics.clone())
            .with_approach(self.approach_deg);
        plant.validate()?;
        Ok(plant)
    }

    /// Grip command used for the lift: the hold threshold plus a margin.
    pub fn initial_command(&self, plant: &Plant, cfg: &SimConfig) -> Result<u8> {
        let threshold = plant
            .holding_command(self.phi_start())
            .ok_or_else(|| Error::invalid(format!("{} cannot be held at this pose", self.object)))?;
        Ok(threshold.saturating_add(cfg.hold_margin))
    }

    pub fn initial_state(&self, plant: &Plant, cfg: &SimConfig) -> Result<SimState> {
        Ok(plant.initial_state(self.phi_start(), self.initial_command(plant, cfg)?))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::invalid(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }
}

/// Plant-side settings shared by every scenario of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub gripper: GripperModel,
    pub dynamics: DynamicsParams,
    pub timing: EpisodeTiming,
    /// Increments closed past the hold threshold when lifting.
    pub hold_margin: u8,
    /// Increments opened past the hold threshold in rotate-to-stop.
    pub rotate_open_past: u8,
    /// Std-dev of the raw angle measurement before annotation, degrees.
    pub angle_noise_deg: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            gripper: GripperModel::default(),
            dynamics: DynamicsParams::default(),
            timing: EpisodeTiming::default(),
            hold_margin: 4,
            rotate_open_past: 4,
            angle_noise_deg: 0.1,
        }
    }
}
