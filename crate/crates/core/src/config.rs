//! Run configuration shared by every command: environment, learner and seed,
//! stored as TOML with `[env]` and `[train]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::learner::{Agent, Checkpoint, LearnError, TrainConfig};
use crate::sim_env::EnvConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, LearnError> {
        let cfg: Self = toml::from_str(text).map_err(|e| LearnError::Config(format!("{origin}: {e}")))?;
        cfg.validate()
            .map_err(|e| LearnError::Config(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let text = std::fs::read_to_string(path).map_err(|e| LearnError::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Fully resolved TOML, every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        self.env.validate()?;
        self.train.validate()
    }

    pub fn checkpoint(&self, agent: &Agent) -> Checkpoint {
        Checkpoint::from_agent(self.to_toml(), agent)
    }

    /// Rebuilds the configuration and agent stored in a checkpoint.
    pub fn restore(checkpoint: &Checkpoint) -> Result<(Self, Agent), LearnError> {
        let cfg = Self::from_toml(&checkpoint.config, "checkpoint config")
            .map_err(|e| LearnError::Checkpoint(e.to_string()))?;
        let mut agent = Agent::zeros(&cfg.env, &cfg.train)?;
        checkpoint.apply_to(&mut agent)?;
        Ok((cfg, agent))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::train;
    use crate::sim_env::objects::Shape;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        assert!(text.contains("[env]") && text.contains("[train]"));
        assert_eq!(RunConfig::from_toml(&text, "t").unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml(
            "seed = 4\n[env]\nshapes = [\"cylinder\"]\n[train]\ntotal_steps = 10\n",
            "t",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.env.shapes, vec![Shape::Cylinder]);
        assert_eq!(cfg.train.total_steps, 10);
        assert_eq!(cfg.train.gamma, 0.99);
    }

    #[test]
    fn unknown_and_invalid_fields_rejected() {
        assert!(RunConfig::from_toml("[train]\ngamma_typo = 1\n", "t").is_err());
        assert!(RunConfig::from_toml("[train]\ngamma = 2.0\n", "t").is_err());
        assert!(RunConfig::from_toml("[env]\nshapes = [\"teapot\"]\n", "t").is_err());
    }

    #[test]
    fn checkpoint_restores_agent() {
        let mut cfg = RunConfig::default();
        cfg.env.image_size = 8;
        cfg.train.total_steps = 0;
        cfg.train.network.hidden = vec![4];
        let out = train::train(&cfg.env, &cfg.train, 3, |_| {}).unwrap();
        let ck = cfg.checkpoint(&out.agent);
        let bytes = ck.encode();
        let (cfg2, agent2) = RunConfig::restore(&Checkpoint::decode(&bytes).unwrap()).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(agent2.named_tensors(), out.agent.named_tensors());
        assert_eq!(cfg2.checkpoint(&agent2).encode(), bytes);
    }
}
