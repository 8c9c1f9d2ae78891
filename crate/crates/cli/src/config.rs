//! Experiment configuration: one strict JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use physattn_core::{
    derive_params, BaseConstants, MetricConfig, OperatorSchedule, PriorTemplate, ScenarioParams,
};

use crate::{CliError, CliResult};

/// Everything a run needs. Unknown keys are rejected and every
/// module-level invariant is re-validated on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioParams,
    pub constants: BaseConstants,
    pub alpha: f64,
    pub prior: PriorTemplate,
    pub schedule: OperatorSchedule,
    pub metrics: MetricConfig,
    pub steps: usize,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioParams::default(),
            constants: BaseConstants::default(),
            alpha: 0.5,
            prior: PriorTemplate::heat(),
            schedule: OperatorSchedule::default(),
            metrics: MetricConfig::desk(),
            steps: 30,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seeds: (1..=20).collect(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |e: physattn_core::Error| CliError::Config(e.to_string());
        derive_params(self.alpha, self.constants).map_err(bad)?;
        for &alpha in &self.alphas {
            derive_params(alpha, self.constants).map_err(bad)?;
        }
        self.schedule.validate().map_err(bad)?;
        self.metrics.validate().map_err(bad)?;
        physattn_core::StoryScenario::from_params(&self.scenario, 0).map_err(bad)?;
        if self.steps == 0 {
            return Err(CliError::Config("steps must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        Ok(())
    }

    /// `--seed` narrows the run to a single seed.
    pub fn with_seed_override(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.seeds = vec![seed];
        }
        self
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_and_validates() {
        let config = ExperimentConfig::default();
        config.validate().unwrap();
        let text = config.to_pretty_json();
        let parsed: ExperimentConfig = serde_json::from_str(&text).unwrap();
        parsed.validate().unwrap();
        assert_eq!(parsed.alpha, config.alpha);
        assert_eq!(parsed.seeds, config.seeds);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut value: serde_json::Value =
            serde_json::from_str(&ExperimentConfig::default().to_pretty_json()).unwrap();
        value
            .as_object_mut()
            .unwrap()
            .insert("surprise".into(), serde_json::json!(1));
        let err = serde_json::from_value::<ExperimentConfig>(value).unwrap_err();
        assert!(err.to_string().contains("surprise"));
    }

    #[test]
    fn out_of_range_alpha_fails_validation() {
        let mut config = ExperimentConfig::default();
        config.alphas.push(1.5);
        assert!(matches!(config.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn seed_override_narrows_the_list() {
        let config = ExperimentConfig::default().with_seed_override(Some(99));
        assert_eq!(config.seeds, vec![99]);
    }

    #[test]
    fn shipped_default_config_matches_the_built_in_defaults() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs/default.json");
        let loaded = ExperimentConfig::load(&path).unwrap();
        let built_in = ExperimentConfig::default();
        assert_eq!(loaded.to_pretty_json(), built_in.to_pretty_json());
    }
}
