//! Scenario document (TOML) reading and writing.

use thiserror::Error;

use super::model::Scenario;
use super::validate::{validate, Finding};

/// Unit annotations accepted in the optional `[units]` table. Anything else is
/// rejected: the model never converts units.
const CANONICAL_UNITS: &[(&str, &str)] = &[
    ("time", "h"),
    ("load", "particles"),
    ("area", "cm2"),
    ("volume", "m3"),
    ("flow", "m3/h"),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario document is not valid TOML: {0}")]
    Syntax(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid scenario:\n{}", format_findings(.0))]
    Invalid(Vec<Finding>),
    #[error("unknown fixture `{0}` (expected case-study-1, case-study-2 or case-study-3)")]
    UnknownFixture(String),
}

fn format_findings(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(|f| format!("  {f}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses and validates a scenario document. Warnings do not fail parsing.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ScenarioError::Syntax(e.to_string()))?;
    if let Some(units) = table.remove("units") {
        check_units(&units)?;
    }
    let scenario: Scenario =
        serde_path_to_error::deserialize(table).map_err(|e| ScenarioError::Schema {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?;
    ensure_valid(scenario)
}

pub(crate) fn ensure_valid(scenario: Scenario) -> Result<Scenario, ScenarioError> {
    let errors: Vec<_> = validate(&scenario)
        .into_iter()
        .filter(Finding::is_error)
        .collect();
    if errors.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(errors))
    }
}

fn check_units(units: &toml::Value) -> Result<(), ScenarioError> {
    let schema = |path: String, message: String| ScenarioError::Schema { path, message };
    let table = units
        .as_table()
        .ok_or_else(|| schema("units".into(), "expected a table".into()))?;
    for (key, value) in table {
        let path = format!("units.{key}");
        let expected = CANONICAL_UNITS
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, u)| *u)
            .ok_or_else(|| schema(path.clone(), "unknown quantity".into()))?;
        if value.as_str() != Some(expected) {
            return Err(schema(
                path,
                format!("only `{expected}` is supported (got {value})"),
            ));
        }
    }
    Ok(())
}

/// Canonical TOML form; `parse_scenario` of the output reproduces the input.
pub fn to_toml_string(scenario: &Scenario) -> String {
    toml::to_string(scenario).expect("scenario always serializes to TOML")
}
