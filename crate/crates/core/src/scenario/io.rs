use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{validate_scenario, Scenario, Violation};

/// Strictness of the loader regarding unknown keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    #[default]
    Strict,
    /// Unknown keys are ignored.
    Lax,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("scenario failed validation:\n{}", format_violations(.0))]
    Validation(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reads and validates a scenario file, rejecting unknown keys.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    load_scenario_with(path, LoadMode::Strict)
}

pub fn load_scenario_with(path: impl AsRef<Path>, mode: LoadMode) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, mode)
}

/// Parses a scenario document, applies defaults and validates it.
pub fn parse_scenario(text: &str, mode: LoadMode) -> Result<Scenario, ScenarioError> {
    let mut json = serde_json::Deserializer::from_str(text);
    let mut track = serde_path_to_error::Track::new();
    let mut unknown = Vec::new();
    let parsed = {
        let tracked = serde_path_to_error::Deserializer::new(&mut json, &mut track);
        serde_ignored::deserialize(tracked, |p| unknown.push(p.to_string()))
            .map_err(|e: serde_json::Error| (e, track.path().to_string()))
    };
    let scenario: Scenario = match parsed {
        Ok(s) => s,
        Err((e, path)) => {
            return Err(match e.classify() {
                serde_json::error::Category::Data => ScenarioError::Schema {
                    path: if path.is_empty() { ".".into() } else { path },
                    message: e.to_string(),
                },
                _ => ScenarioError::Parse {
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                },
            })
        }
    };
    json.end().map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if mode == LoadMode::Strict {
        if let Some(path) = unknown.into_iter().next() {
            return Err(ScenarioError::Schema {
                message: format!("unknown key '{path}'"),
                path,
            });
        }
    }
    let violations = validate_scenario(&scenario);
    if !violations.is_empty() {
        return Err(ScenarioError::Validation(violations));
    }
    Ok(scenario)
}

impl Scenario {
    /// Pretty JSON rendering with every default made explicit.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Parse without validation; used where an invalid scenario must still be
    /// inspected (e.g. by `gridshare validate`).
    pub fn from_json_unchecked(text: &str) -> Result<Scenario, serde_json::Error> {
        Scenario::deserialize(&mut serde_json::Deserializer::from_str(text))
    }
}
