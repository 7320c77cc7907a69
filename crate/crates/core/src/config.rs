//! Parameter-space and backend configuration: a JSON document with keys
//! `parameters`, `backend`, `command`, `success_rule`, `oracle`, `replay`,
//! `workers`, `budget`, `seed`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::engine::{
    read_provenance_csv, CommandBackend, EngineConfig, OracleBackend, PipelineBackend,
    ReplayBackend, SuccessRule,
};
use crate::model::{
    Comparator, Evaluation, ModelError, ParamKind, Parameter, ParameterSpace, PipelineInstance,
    Value,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read `{0}`: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Deserialize)]
struct RawConfig {
    parameters: Vec<RawParameter>,
    backend: String,
    #[serde(default)]
    command: Option<RawCommand>,
    #[serde(default)]
    success_rule: Option<RawSuccessRule>,
    #[serde(default)]
    oracle: Option<RawOracle>,
    #[serde(default)]
    replay: Option<RawReplay>,
    #[serde(default)]
    workers: Option<usize>,
    #[serde(default)]
    budget: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct RawParameter {
    name: String,
    kind: String,
    domain: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
struct RawCommand {
    argv: Vec<String>,
    #[serde(default)]
    timeout_secs: Option<f64>,
    #[serde(default)]
    timeout_is_fail: Option<bool>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawSuccessRule {
    ExitCodeZero,
    Threshold {
        pattern: String,
        comparator: String,
        bound: f64,
    },
}

#[derive(Deserialize)]
struct RawOracle {
    cause: String,
    #[serde(default)]
    delay_ms: Option<u64>,
}

#[derive(Deserialize)]
struct RawReplay {
    provenance: String,
}

/// A fully constructed setup: space, backend, and engine knobs.
pub struct LoadedConfig {
    pub space: ParameterSpace,
    pub backend: PipelineBackend,
    pub engine: EngineConfig,
    pub seed: u64,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parse a config document; `base_dir` anchors relative paths such as the
/// replay provenance file.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    let mut parameters = Vec::with_capacity(raw.parameters.len());
    for rp in &raw.parameters {
        let kind = match rp.kind.as_str() {
            "ordinal" => ParamKind::Ordinal,
            "categorical" => ParamKind::Categorical,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "parameter `{}` has unknown kind `{other}` (expected ordinal or categorical)",
                    rp.name
                )))
            }
        };
        let mut domain = Vec::with_capacity(rp.domain.len());
        for dv in &rp.domain {
            domain.push(json_value(dv, &rp.name)?);
        }
        parameters.push(Parameter {
            name: rp.name.clone(),
            kind,
            domain,
        });
    }
    let space = ParameterSpace::new(parameters)?;

    let backend = match raw.backend.as_str() {
        "oracle" => {
            let oracle = raw.oracle.as_ref().ok_or_else(|| {
                ConfigError::Invalid("backend `oracle` needs an `oracle` section".into())
            })?;
            let cause = space.parse_dnf(&oracle.cause)?;
            let mut backend = OracleBackend::new(cause);
            backend.delay = Duration::from_millis(oracle.delay_ms.unwrap_or(0));
            PipelineBackend::Oracle(backend)
        }
        "command" => {
            let cmd = raw.command.as_ref().ok_or_else(|| {
                ConfigError::Invalid("backend `command` needs a `command` section".into())
            })?;
            let rule = match &raw.success_rule {
                None | Some(RawSuccessRule::ExitCodeZero) => SuccessRule::ExitCodeZero,
                Some(RawSuccessRule::Threshold {
                    pattern,
                    comparator,
                    bound,
                }) => {
                    let comparator = Comparator::parse(comparator).ok_or_else(|| {
                        ConfigError::Invalid(format!("unknown comparator `{comparator}`"))
                    })?;
                    let pattern = regex::Regex::new(pattern)
                        .map_err(|e| ConfigError::Invalid(format!("bad extractor pattern: {e}")))?;
                    SuccessRule::Threshold {
                        pattern,
                        comparator,
                        bound: *bound,
                    }
                }
            };
            let mut backend = CommandBackend::new(cmd.argv.clone(), rule, &space)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            backend.timeout = Duration::from_secs_f64(cmd.timeout_secs.unwrap_or(0.0));
            backend.timeout_is_fail = cmd.timeout_is_fail.unwrap_or(false);
            PipelineBackend::Command(backend)
        }
        "replay" => {
            let replay = raw.replay.as_ref().ok_or_else(|| {
                ConfigError::Invalid("backend `replay` needs a `replay` section".into())
            })?;
            let path = base_dir.join(&replay.provenance);
            let file = std::fs::File::open(&path).map_err(|e| ConfigError::Io(path.clone(), e))?;
            let records = read_provenance_csv(&space, file).map_err(ConfigError::Invalid)?;
            let mut table: HashMap<PipelineInstance, Evaluation> = HashMap::new();
            for r in records {
                if let Some(prev) = table.insert(r.instance.clone(), r.evaluation) {
                    if prev != r.evaluation {
                        return Err(ConfigError::Invalid(format!(
                            "replay table is inconsistent for instance {}",
                            r.instance.canonical()
                        )));
                    }
                }
            }
            PipelineBackend::Replay(ReplayBackend { table })
        }
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown backend `{other}` (expected command, oracle, or replay)"
            )))
        }
    };

    Ok(LoadedConfig {
        space,
        backend,
        engine: EngineConfig {
            workers: raw.workers.unwrap_or(1).max(1),
            budget: raw.budget,
        },
        seed: raw.seed.unwrap_or(0),
    })
}

fn json_value(v: &serde_json::Value, param: &str) -> Result<Value, ConfigError> {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Value::Int(i))
            } else if let Some(x) = n.as_f64() {
                Ok(Value::real(x)?)
            } else {
                Err(ConfigError::Invalid(format!(
                    "domain value {n} of `{param}` is out of range"
                )))
            }
        }
        serde_json::Value::String(s) => Ok(Value::text(s.clone())?),
        other => Err(ConfigError::Invalid(format!(
            "domain value {other} of `{param}` must be a number or string"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_oracle_config() {
        let text = r#"{
            "parameters": [
                {"name": "Dataset", "kind": "categorical", "domain": ["Iris", "Digits"]},
                {"name": "LibraryVersion", "kind": "ordinal", "domain": [1.0, 2.0]}
            ],
            "backend": "oracle",
            "oracle": {"cause": "LibraryVersion = 2.0"},
            "workers": 2,
            "budget": 10,
            "seed": 7
        }"#;
        let cfg = parse_config(text, Path::new(".")).unwrap();
        assert_eq!(cfg.space.len(), 2);
        assert_eq!(cfg.engine.workers, 2);
        assert_eq!(cfg.engine.budget, Some(10));
        assert_eq!(cfg.seed, 7);
        assert!(matches!(cfg.backend, PipelineBackend::Oracle(_)));
    }

    #[test]
    fn integer_and_real_domains_stay_distinct() {
        let text = r#"{
            "parameters": [
                {"name": "n", "kind": "ordinal", "domain": [1, 2, 3]},
                {"name": "x", "kind": "ordinal", "domain": [1.0, 2.5]}
            ],
            "backend": "oracle",
            "oracle": {"cause": "n = 2"}
        }"#;
        let cfg = parse_config(text, Path::new(".")).unwrap();
        assert_eq!(cfg.space.param(0).domain[0], Value::Int(1));
        assert_eq!(cfg.space.param(1).domain[0], Value::real(1.0).unwrap());
    }

    #[test]
    fn unknown_backend_is_rejected() {
        let text = r#"{"parameters": [], "backend": "magic"}"#;
        assert!(parse_config(text, Path::new(".")).is_err());
    }
}
