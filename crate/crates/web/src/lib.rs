//! Browser demo: run built-in scenarios with overrides and small sweeps.
//!
//! Every export takes and returns JSON strings. The plain functions in this
//! module do the work; the `wasm_bindgen` wrappers only convert errors.

use std::collections::BTreeMap;

use fomes_core::exposure::{mass_balance_report, pathway_shares};
use fomes_core::scenario::FIXTURE_NAMES;
use fomes_core::sweep::{apply_overrides, run_sweep, SweepSpec};
use fomes_core::{builtin_fixture, integrate, IntegrationConfig, Scenario};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Trajectory {
    times: Vec<f64>,
    air: Vec<f64>,
    surfaces: BTreeMap<String, Vec<f64>>,
    individuals: Vec<PersonOut>,
    steady_state_air: f64,
    relative_residual: f64,
}

#[derive(Serialize)]
struct PersonOut {
    id: String,
    infected: bool,
    /// Cumulative dose per pathway at each grid time.
    fomite: Vec<f64>,
    aerosol: Vec<f64>,
    close_contact: Vec<f64>,
    risk: f64,
    shares: Option<[f64; 3]>,
}

#[derive(Serialize)]
struct Cell {
    axis1: f64,
    axis2: f64,
    metric: f64,
}

fn to_toml(value: &serde_json::Value) -> Result<toml::Value, String> {
    match value {
        serde_json::Value::Bool(b) => Ok(toml::Value::Boolean(*b)),
        serde_json::Value::Number(n) => Ok(match n.as_i64() {
            Some(i) => toml::Value::Integer(i),
            None => toml::Value::Float(n.as_f64().ok_or("number out of range")?),
        }),
        serde_json::Value::String(s) => Ok(toml::Value::String(s.clone())),
        other => Err(format!("unsupported override value {other}")),
    }
}

/// Fixture `name` with `overrides`, a JSON object of `path: value` pairs.
fn scenario(name: &str, overrides: &str) -> Result<Scenario, String> {
    let base = builtin_fixture(name).map_err(|e| e.to_string())?;
    let map: BTreeMap<String, serde_json::Value> = if overrides.trim().is_empty() {
        BTreeMap::new()
    } else {
        serde_json::from_str(overrides).map_err(|e| format!("overrides: {e}"))?
    };
    let list = map
        .iter()
        .map(|(k, v)| Ok((k.clone(), to_toml(v)?)))
        .collect::<Result<Vec<_>, String>>()?;
    apply_overrides(&base, &list).map_err(|e| e.to_string())
}

pub fn fixture_names() -> String {
    serde_json::to_string(&FIXTURE_NAMES).unwrap()
}

pub fn simulate(name: &str, overrides: &str, grid_step: f64) -> Result<String, String> {
    let scenario = scenario(name, overrides)?;
    let config = IntegrationConfig {
        grid_step,
        ..IntegrationConfig::for_scenario(&scenario)
    };
    let result = integrate(&scenario, &config).map_err(|e| e.to_string())?;
    let t_end = *result.times.last().unwrap();
    let individuals = (0..result.individual_ids.len())
        .map(|j| PersonOut {
            id: result.individual_ids[j].clone(),
            infected: result.infected[j],
            fomite: result.series(|s| s.doses[j].fomite),
            aerosol: result.series(|s| s.doses[j].aerosol),
            close_contact: result.series(|s| s.doses[j].close_contact),
            risk: result.final_risk(j),
            shares: pathway_shares(&result, j, t_end)
                .ok()
                .map(|s| [s.fomite, s.aerosol, s.close_contact]),
        })
        .collect();
    let surfaces = result
        .surface_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), result.surface_series(i)))
        .collect();
    let out = Trajectory {
        times: result.times.clone(),
        air: result.air_series(),
        surfaces,
        individuals,
        steady_state_air: result.steady_state_air,
        relative_residual: mass_balance_report(&result).relative_residual,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Runs the sweep document `spec` (TOML) over fixture `name`.
pub fn sweep(name: &str, overrides: &str, spec: &str) -> Result<String, String> {
    let scenario = scenario(name, overrides)?;
    let spec = SweepSpec::parse(spec).map_err(|e| e.to_string())?;
    let config = IntegrationConfig::for_scenario(&scenario);
    let grid = run_sweep(&scenario, &spec, &config, Some(1)).map_err(|e| e.to_string())?;
    let cells: Vec<Cell> = grid
        .iter()
        .map(|c| Cell {
            axis1: c.axis1,
            axis2: c.axis2,
            metric: c.metric,
        })
        .collect();
    serde_json::to_string(&cells).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = fixtures)]
pub fn fixtures_js() -> String {
    fixture_names()
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(name: &str, overrides: &str, grid_step: f64) -> Result<String, JsError> {
    simulate(name, overrides, grid_step).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sweep)]
pub fn sweep_js(name: &str, overrides: &str, spec: &str) -> Result<String, JsError> {
    sweep(name, overrides, spec).map_err(|e| JsError::new(&e))
}
