//! The shared configuration schema consumed by every CLI subcommand. One JSON
//! file drives probability queries, sampling, and verification; unknown
//! fields are rejected so a typo cannot silently change a run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::PathConstraint;
use crate::harness::FamilySpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Prob,
    Sample,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?} (want csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
}

/// A single probability or sampling query: a named family member expanded to
/// n steps, a start point, and a constraint literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub member: String,
    pub n: usize,
    #[serde(default)]
    pub u: i64,
    #[serde(default)]
    pub constraint: PathConstraint,
}

/// The one config schema shared by all subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Family literal; the built-in corpus when omitted.
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub theorem_id: Option<String>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub spread_cap: Option<f64>,
    #[serde(default)]
    pub samples: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: ScenarioConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(family) = &self.family {
            family
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let Some(id) = &self.theorem_id {
            if id != "all" && !crate::harness::REGISTRY.contains(&id.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "theoremId {id:?} not in the registry"
                )));
            }
        }
        if let Some(scenario) = &self.scenario {
            let family = self.family_or_default();
            if !family.members.iter().any(|m| m.name == scenario.member) {
                return Err(ConfigError::Invalid(format!(
                    "scenario member {:?} not in the family",
                    scenario.member
                )));
            }
            if scenario.n == 0 {
                return Err(ConfigError::Invalid("scenario n must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn family_or_default(&self) -> FamilySpec {
        self.family.clone().unwrap_or_else(FamilySpec::default_corpus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses() {
        let cfg: ScenarioConfig = serde_json::from_str(r#"{"task":"verify","theoremId":"ballot"}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.task, Some(Task::Verify));
        assert_eq!(cfg.family_or_default().members.len(), 4);
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = serde_json::from_str::<ScenarioConfig>(r#"{"task":"verify","thereomId":"ballot"}"#);
        assert!(err.is_err());
    }

    #[test]
    fn unknown_theorem_rejected() {
        let cfg: ScenarioConfig =
            serde_json::from_str(r#"{"theoremId":"perpetual-motion"}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scenario_member_must_exist() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{"scenario":{"member":"nope","n":8,"u":0,"constraint":{}}}"#,
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn full_config_round_trips() {
        let json = r#"{
            "task": "verify",
            "theoremId": "ballot",
            "seed": 7,
            "parallelism": 2,
            "spreadCap": 8.5,
            "output": {"path": "out", "format": "csv"},
            "scenario": {"member": "lazy", "n": 16, "u": 1,
                         "constraint": {"bands": [], "strictFloor": false,
                                        "checkpoints": [], "endpoint": 2}}
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        let back = serde_json::to_string(&cfg).unwrap();
        let again: ScenarioConfig = serde_json::from_str(&back).unwrap();
        assert_eq!(cfg, again);
    }
}
