//! Experiment configuration files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    ModelCheck,
    TransformCheck,
    SymbolOrder,
    Compose,
    Parametrix,
    Funcalc,
    Garding,
    L2norm,
    Evolve,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::ModelCheck => "model-check",
            Task::TransformCheck => "transform-check",
            Task::SymbolOrder => "symbol-order",
            Task::Compose => "compose",
            Task::Parametrix => "parametrix",
            Task::Funcalc => "funcalc",
            Task::Garding => "garding",
            Task::L2norm => "l2norm",
            Task::Evolve => "evolve",
        }
    }
}

fn default_output_dir() -> String {
    "out".into()
}

/// One experiment. `params` is validated against the task's own schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub task: Task,
    #[serde(default = "empty_params")]
    pub params: serde_json::Value,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub seed: u64,
}

fn empty_params() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.model.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Task parameters decoded into their typed schema.
    pub fn params<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.params.clone())
            .map_err(|e| Error::Config(format!("params for {}: {e}", self.task.name())))
    }

    /// SHA-256 over everything that determines the results (the output
    /// directory is excluded).
    pub fn digest(&self) -> String {
        let key = serde_json::json!({
            "model": self.model,
            "task": self.task,
            "params": self.params,
            "seed": self.seed,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str =
        r#"{"model":{"kind":"h_derivative","h":2.0,"truncation":8,"quadrature_points":64},"task":"model-check"}"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::parse(GOOD).unwrap();
        assert_eq!(c.task, Task::ModelCheck);
        assert_eq!(c.output_dir, "out");
        assert_eq!(c.digest(), ExperimentConfig::parse(GOOD).unwrap().digest());
    }

    #[test]
    fn rejects_bad_configs() {
        let unknown = GOOD.replace("\"task\"", "\"extra\":1,\"task\"");
        assert!(ExperimentConfig::parse(&unknown).unwrap_err().is_config());
        let small_q = GOOD.replace("64", "8");
        assert!(ExperimentConfig::parse(&small_q).unwrap_err().is_config());
        let bad_task = GOOD.replace("model-check", "nope");
        assert!(ExperimentConfig::parse(&bad_task).unwrap_err().is_config());
    }
}
