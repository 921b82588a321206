//! Scenario configuration: one TOML document per experiment. Every key has
//! a default, units are spelled out in key names, and unknown keys are
//! rejected with the full field path.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contingency::ContingencyConfig;
use crate::error::{Error, Result};
use crate::evidence::{RecognitionConfig, Status};
use crate::inference::InferenceConfig;
use crate::mdn::MdnConfig;
use crate::nn::{Activation, AdamConfig};
use crate::schedule::ScheduleConfig;
use crate::simworld::world::{OtherSpec, WorldConfig};
use crate::HIST_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// The robot faces a mirror.
    Mirror,
    /// A second robot waves on its own random schedule.
    TwinAsync,
    /// A second body copying the robot's motion, optionally lagged.
    TwinSync,
    /// A sinusoidal waver.
    ScriptedOther,
    /// A body driven over the session socket.
    InteractiveOther,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        Self::Mirror,
        Self::TwinAsync,
        Self::TwinSync,
        Self::ScriptedOther,
        Self::InteractiveOther,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mirror => "mirror",
            Self::TwinAsync => "twin_async",
            Self::TwinSync => "twin_sync",
            Self::ScriptedOther => "scripted_other",
            Self::InteractiveOther => "interactive_other",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (mirror|twin_async|twin_sync|scripted_other|interactive_other)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdnTrainingConfig {
    pub hidden_units: usize,
    pub mixtures: usize,
    pub activation: Activation,
    /// Floor on kernel widths, normalized image units.
    pub sigma_min: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for MdnTrainingConfig {
    fn default() -> Self {
        Self {
            hidden_units: 20,
            mixtures: 4,
            activation: Activation::Tanh,
            sigma_min: 0.02,
            epochs: 1000,
            batch_size: 200,
            adam: AdamConfig::default(),
        }
    }
}

impl MdnTrainingConfig {
    pub fn network(&self) -> MdnConfig {
        MdnConfig {
            hidden_units: self.hidden_units,
            mixtures: self.mixtures,
            activation: self.activation,
            sigma_min: self.sigma_min,
            ..MdnConfig::default()
        }
    }
}

/// Contingency prior: trained once from practice waving in front of a
/// mirror, then frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub classifier: ContingencyConfig,
    pub practice_trials: usize,
    pub practice_duration_s: f64,
    pub seed: u64,
    /// Load a trained classifier instead of running practice.
    pub weights_path: Option<PathBuf>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            classifier: ContingencyConfig::default(),
            practice_trials: 4,
            practice_duration_s: 20.0,
            seed: 7,
            weights_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinConfig {
    /// Delay of the copying body in `twin_sync`.
    pub lag_s: f64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self { lag_s: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedConfig {
    pub amplitude_rad: f64,
    pub frequency_hz: f64,
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        Self {
            amplitude_rad: 0.5,
            frequency_hz: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Simulated seconds per wall-clock second; 0 runs unthrottled.
    pub speedup: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            speedup: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub world: WorldConfig,
    /// Left/right image goals during evaluation.
    pub attractor: ScheduleConfig,
    pub inference: InferenceConfig,
    pub mdn: MdnTrainingConfig,
    pub recognition: RecognitionConfig,
    pub contingency: PriorConfig,
    pub twin: TwinConfig,
    pub scripted: ScriptedConfig,
    pub session: SessionConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Mirror,
            seed: 1,
            world: WorldConfig::default(),
            attractor: ScheduleConfig::default(),
            inference: InferenceConfig::default(),
            mdn: MdnTrainingConfig::default(),
            recognition: RecognitionConfig::default(),
            contingency: PriorConfig::default(),
            twin: TwinConfig::default(),
            scripted: ScriptedConfig::default(),
            session: SessionConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn for_kind(kind: ScenarioKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Parse and validate. Errors name the offending key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.world;
        if !(w.dt_s > 0.0) {
            return Err(Error::config("world.dt_s", "must be positive"));
        }
        w.arm().map_err(|e| Error::config("world", e.to_string()))?;
        for (key, range) in [("world.mirror_distance_m", w.mirror_distance_m), ("world.mirror_yaw_rad", w.mirror_yaw_rad)] {
            if !(range[0] <= range[1]) {
                return Err(Error::config(key, "range must be ordered"));
            }
        }
        if !(w.mirror_distance_m[0] > 0.2) {
            return Err(Error::config("world.mirror_distance_m", "mirror must stand in front of the arm"));
        }
        if w.sensor.histogram_bins != HIST_BINS {
            return Err(Error::config("world.sensor.histogram_bins", format!("only {HIST_BINS} bins are supported")));
        }
        if w.waving.waving_joint >= crate::DOF {
            return Err(Error::config("world.waving.waving_joint", "joint out of range"));
        }
        for (key, s) in [("world.waving_schedule", &w.waving_schedule), ("attractor", &self.attractor)] {
            if !(s.active_s > 0.0) {
                return Err(Error::config(format!("{key}.active_s"), "must be positive"));
            }
            if !(s.idle_max_s >= 0.0) {
                return Err(Error::config(format!("{key}.idle_max_s"), "must be non-negative"));
            }
        }
        self.inference.validate("inference")?;
        self.network_checked()?;
        if self.mdn.epochs == 0 {
            return Err(Error::config("mdn.epochs", "must be positive"));
        }
        if self.mdn.batch_size == 0 {
            return Err(Error::config("mdn.batch_size", "must be positive"));
        }
        if !(self.mdn.adam.learning_rate > 0.0) {
            return Err(Error::config("mdn.adam.learning_rate", "must be positive"));
        }
        self.recognition.validate("recognition")?;
        self.contingency.classifier.validate("contingency.classifier")?;
        if self.contingency.weights_path.is_none() {
            if self.contingency.practice_trials == 0 {
                return Err(Error::config("contingency.practice_trials", "must be positive"));
            }
            if !(self.contingency.practice_duration_s > 0.0) {
                return Err(Error::config("contingency.practice_duration_s", "must be positive"));
            }
        }
        if !(self.twin.lag_s >= 0.0) {
            return Err(Error::config("twin.lag_s", "must be non-negative"));
        }
        if self.kind == ScenarioKind::ScriptedOther && !(self.scripted.frequency_hz > 0.0) {
            return Err(Error::config("scripted.frequency_hz", "must be positive"));
        }
        if !(self.session.speedup >= 0.0) {
            return Err(Error::config("session.speedup", "must be non-negative"));
        }
        Ok(())
    }

    fn network_checked(&self) -> Result<MdnConfig> {
        let net = self.mdn.network();
        if net.hidden_units == 0 {
            return Err(Error::config("mdn.hidden_units", "must be positive"));
        }
        if net.mixtures == 0 {
            return Err(Error::config("mdn.mixtures", "must be positive"));
        }
        if !(net.sigma_min >= 0.0 && net.sigma_min.is_finite()) {
            return Err(Error::config("mdn.sigma_min", "must be finite and non-negative"));
        }
        Ok(net)
    }

    /// The correct verdict for this scenario: only the mirror and a
    /// lag-free replay of the robot itself are "self".
    pub fn expected_status(&self) -> Status {
        match self.kind {
            ScenarioKind::Mirror => Status::IsSelf,
            ScenarioKind::TwinSync if self.twin.lag_s <= 0.0 => Status::IsSelf,
            _ => Status::Other,
        }
    }

    /// What the camera sees besides (or instead of) the mirror image.
    pub fn other_spec(&self) -> OtherSpec {
        match self.kind {
            ScenarioKind::Mirror => OtherSpec::None,
            ScenarioKind::TwinAsync => OtherSpec::Twin,
            ScenarioKind::TwinSync => OtherSpec::Replay { delay_s: self.twin.lag_s },
            ScenarioKind::ScriptedOther => OtherSpec::Scripted {
                amplitude_rad: self.scripted.amplitude_rad,
                frequency_hz: self.scripted.frequency_hz,
            },
            ScenarioKind::InteractiveOther => OtherSpec::Human,
        }
    }
}
