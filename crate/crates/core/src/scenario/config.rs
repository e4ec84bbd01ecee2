//! Scenario and override files (TOML).

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{BeamConfig, BeamId, Scenario, ScenarioError, SiteId};

fn classify(text: &str, err: toml::de::Error) -> ScenarioError {
    let msg = err.message().to_string();
    if let Some(name) = backticked_after(&msg, "missing field") {
        return ScenarioError::MissingField(name);
    }
    if let Some(name) = backticked_after(&msg, "unknown field") {
        return ScenarioError::UnknownKey(name);
    }
    if let Some(name) = backticked_after(&msg, "unknown variant") {
        return ScenarioError::UnknownKey(name);
    }
    let line = err
        .span()
        .map(|s| text[..s.start.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1)
        .unwrap_or(0);
    ScenarioError::MalformedSyntax { line, msg }
}

fn backticked_after(msg: &str, prefix: &str) -> Option<String> {
    let rest = &msg[msg.find(prefix)? + prefix.len()..];
    let start = rest.find('`')? + 1;
    let end = start + rest[start..].find('`')?;
    Some(rest[start..end].to_string())
}

pub(crate) fn from_toml<T: DeserializeOwned>(text: &str) -> Result<T, ScenarioError> {
    toml::from_str(text).map_err(|e| classify(text, e))
}

/// Parses and validates a scenario from TOML text.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = from_toml(text)?;
    s.validate()?;
    Ok(s)
}

/// Reads, parses and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

/// One beam replacement in a C1 call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamOverride {
    pub site_id: SiteId,
    pub beam: BeamConfig,
}

impl BeamOverride {
    pub fn beam_id(&self) -> BeamId {
        self.beam.beam_id
    }
}

/// Reusable override file: `[[override]]` entries each holding a
/// `site_id` and a full `[override.beam]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OverrideFile {
    #[serde(rename = "override", default)]
    pub overrides: Vec<BeamOverride>,
}

impl OverrideFile {
    pub fn parse_str(text: &str) -> Result<Self, ScenarioError> {
        let f: OverrideFile = from_toml(text)?;
        for o in &f.overrides {
            o.beam.validate(&format!("override[{}:{}]", o.site_id, o.beam.beam_id))?;
        }
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("overrides are always serializable")
    }
}
