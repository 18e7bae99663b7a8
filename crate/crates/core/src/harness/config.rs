use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::planner::{PlannerConfig, SimConfig};
use crate::scene::{EpisodeGenConfig, GeneratorConfig};
use crate::world_model::NoiseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Oracle,
    #[default]
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub noise: NoiseConfig,
    /// Leading suite episodes whose start-pose rollouts build the sigma
    /// percentile table; 0 disables calibration.
    pub calibration_episodes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Noisy,
            noise: NoiseConfig::default(),
            calibration_episodes: 20,
        }
    }
}

/// Everything `run` needs besides the suite itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub planner: PlannerConfig,
    pub sim: SimConfig,
    pub model: ModelConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl SuiteConfig {
    /// The configuration the standard suite is evaluated with.
    pub fn reference() -> Self {
        let mut planner = PlannerConfig::default();
        planner.candidates.k = 12;
        Self {
            planner,
            sim: SimConfig::default(),
            model: ModelConfig::default(),
        }
    }

    /// Reference planner with the noiseless oracle.
    pub fn oracle() -> Self {
        let mut c = Self::reference();
        c.model.kind = ModelKind::Oracle;
        c.model.calibration_episodes = 0;
        c
    }

    /// Parses a possibly partial config, filling omitted fields from
    /// [`SuiteConfig::reference`].
    pub fn from_json_over_reference(text: &str) -> serde_json::Result<Self> {
        let patch: serde_json::Value = serde_json::from_str(text)?;
        let mut base = serde_json::to_value(Self::reference())?;
        merge(&mut base, patch);
        serde_json::from_value(base)
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    use serde_json::Value;
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Recipe for `gen-suite`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub name: String,
    pub generator: GeneratorConfig,
    pub episodes: EpisodeGenConfig,
    /// Fresh scene seeds tried per episode before giving up.
    pub max_attempts: usize,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl SuiteSpec {
    pub const STANDARD_SEED: u64 = 20_240_601;
    pub const STANDARD_SIZE: usize = 100;

    pub fn standard() -> Self {
        Self {
            name: "standard".into(),
            generator: GeneratorConfig::default(),
            episodes: EpisodeGenConfig::default(),
            max_attempts: 32,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_hash() {
        let c = SuiteConfig::reference();
        let s = serde_json::to_string(&c).unwrap();
        let back: SuiteConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(SuiteConfig::oracle().hash(), c.hash());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = SuiteConfig::from_json_over_reference(r#"{"planner": {"fusion": {"theta": 0.4}}}"#).unwrap();
        assert_eq!(c.planner.fusion.theta, 0.4);
        assert_eq!(c.planner.fusion.gamma, 0.9);
        assert_eq!(c.planner.candidates.k, SuiteConfig::reference().planner.candidates.k);
        assert!(SuiteConfig::from_json_over_reference("[1]").is_err());
    }
}
