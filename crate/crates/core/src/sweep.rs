//! Scenario overrides addressed by path, and two-dimensional parameter
//! sweeps over them.
//!
//! A path walks the scenario document: table keys by name, list entries by
//! position, by `id`/`name`, or by the `donor->acceptor` (contacts) and
//! `emitter->acceptor` (close contacts) key. `*` inside a list selector is a
//! wildcard, so `close_contacts.infected->*:susceptible.time_fraction`
//! addresses both close contacts from `infected` onto `susceptible`.
//!
//! Two virtual paths exist: `cleaning_events` (number of equally spaced
//! discrete cleanings ending at the close of the co-presence window, applied
//! to every discrete cleaning policy) and `setting.air_changes_per_hour`.

use serde::Deserialize;
use thiserror::Error;

use crate::dynamics::Pathway;
use crate::exposure::{pathway_shares, SimulationResult};
use crate::integrator::{integrate, IntegrationConfig, IntegrationError};
use crate::scenario::{ensure_valid, CleaningMode, Scenario, ScenarioError};

pub const CLEANING_EVENTS: &str = "cleaning_events";
pub const AIR_CHANGES: &str = "setting.air_changes_per_hour";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("cannot resolve `{path}`: {reason}")]
    Path { path: String, reason: String },
    #[error("bad sweep spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

fn path_error(path: &str, reason: impl Into<String>) -> SweepError {
    SweepError::Path {
        path: path.to_string(),
        reason: reason.into(),
    }
}

/// Applies `overrides` in order and validates the result.
pub fn apply_overrides(
    base: &Scenario,
    overrides: &[(String, toml::Value)],
) -> Result<Scenario, SweepError> {
    let mut scenario = base.clone();
    for (path, value) in overrides {
        scenario = apply_one(scenario, path, value)?;
    }
    Ok(ensure_valid(scenario)?)
}

fn number(path: &str, value: &toml::Value) -> Result<f64, SweepError> {
    match value {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(n) => Ok(*n as f64),
        other => Err(path_error(path, format!("expected a number, got {other}"))),
    }
}

fn apply_one(
    mut scenario: Scenario,
    path: &str,
    value: &toml::Value,
) -> Result<Scenario, SweepError> {
    match path {
        CLEANING_EVENTS => {
            let n = number(path, value)?;
            if !(n >= 0.0 && n.fract() == 0.0) {
                return Err(path_error(
                    path,
                    format!("expected a whole number of events, got {n}"),
                ));
            }
            set_cleaning_events(&mut scenario, n as usize).map_err(|r| path_error(path, r))?;
            Ok(scenario)
        }
        AIR_CHANGES => {
            let ach = number(path, value)?;
            scenario.setting.ventilation_flow = ach * scenario.setting.air_volume;
            Ok(scenario)
        }
        _ => {
            let mut doc = toml::Value::try_from(&scenario).expect("scenario serializes");
            let segments: Vec<&str> = path.split('.').collect();
            if segments.iter().any(|s| s.is_empty()) {
                return Err(path_error(path, "empty path segment"));
            }
            let hits = assign(&mut doc, &segments, value).map_err(|r| path_error(path, r))?;
            if hits == 0 {
                return Err(path_error(path, "matches nothing"));
            }
            Scenario::deserialize(doc).map_err(|e| {
                SweepError::Scenario(ScenarioError::Schema {
                    path: path.to_string(),
                    message: e.to_string(),
                })
            })
        }
    }
}

/// `n` discrete cleanings, equally spaced and ending when the last infected
/// and susceptible individuals stop overlapping.
pub fn set_cleaning_events(scenario: &mut Scenario, n: usize) -> Result<(), String> {
    let (start, end) = scenario
        .co_presence_window()
        .ok_or("infected and susceptible individuals are never present together")?;
    let times: Vec<f64> = (0..n)
        .map(|k| end - (n - 1 - k) as f64 * (end - start) / n as f64)
        .collect();
    let mut touched = 0;
    let policies = scenario
        .surfaces
        .iter_mut()
        .filter_map(|s| s.cleaning.as_mut())
        .chain(
            scenario
                .individuals
                .iter_mut()
                .filter_map(|p| p.hand_wash.as_mut()),
        );
    for policy in policies.filter(|p| p.mode == CleaningMode::Discrete) {
        policy.event_times = times.clone();
        touched += 1;
    }
    if touched == 0 {
        return Err("scenario has no discrete cleaning policy".into());
    }
    Ok(())
}

fn list_key(entry: &toml::Value) -> Option<String> {
    let t = entry.as_table()?;
    let s = |k: &str| t.get(k).and_then(|v| v.as_str());
    if let Some(id) = s("id").or(s("name")) {
        return Some(id.to_string());
    }
    let from = s("donor").or(s("emitter"))?;
    Some(format!("{from}->{}", s("acceptor")?))
}

fn glob(pattern: &str, text: &str) -> bool {
    match pattern.split_once('*') {
        None => pattern == text,
        Some((head, rest)) => {
            let Some(tail) = text.strip_prefix(head) else {
                return false;
            };
            (0..=tail.len())
                .filter(|&i| tail.is_char_boundary(i))
                .any(|i| glob(rest, &tail[i..]))
        }
    }
}

/// Writes `value` at every location matched by `segments`; returns the
/// number of assignments.
fn assign(node: &mut toml::Value, segments: &[&str], value: &toml::Value) -> Result<usize, String> {
    let (head, rest) = segments.split_first().expect("non-empty path");
    match node {
        toml::Value::Table(table) => {
            if rest.is_empty() {
                table.insert(head.to_string(), value.clone());
                return Ok(1);
            }
            let child = table
                .get_mut(*head)
                .ok_or_else(|| format!("no field `{head}`"))?;
            assign(child, rest, value)
        }
        toml::Value::Array(items) => {
            let selected: Vec<usize> = match head.parse::<usize>() {
                Ok(k) if k < items.len() => vec![k],
                Ok(k) => return Err(format!("index {k} out of range ({} entries)", items.len())),
                Err(_) => (0..items.len())
                    .filter(|&k| list_key(&items[k]).is_some_and(|key| glob(head, &key)))
                    .collect(),
            };
            if selected.is_empty() {
                return Err(format!("no list entry matches `{head}`"));
            }
            let mut hits = 0;
            for k in selected {
                if rest.is_empty() {
                    items[k] = value.clone();
                    hits += 1;
                } else {
                    hits += assign(&mut items[k], rest, value)?;
                }
            }
            Ok(hits)
        }
        _ => Err(format!("cannot descend into `{head}`: not a table or list")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    FinalTotalExposure,
    FinalRisk,
    PathwayShare(Pathway),
}

impl Metric {
    /// Metric of individual `j`; NaN for a pathway share of a zero dose.
    pub fn evaluate(&self, result: &SimulationResult, j: usize) -> f64 {
        match self {
            Metric::FinalTotalExposure => result.final_doses(j).total(),
            Metric::FinalRisk => result.final_risk(j),
            Metric::PathwayShare(p) => {
                let t = *result.times.last().unwrap();
                pathway_shares(result, j, t).map_or(f64::NAN, |s| s.get(*p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis1: Axis,
    pub axis2: Axis,
    pub metric: Metric,
    /// Individual whose metric is reported.
    pub target: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDoc {
    target: String,
    metric: String,
    #[serde(default)]
    pathway: Option<String>,
    axis1: Axis,
    axis2: Axis,
}

impl SweepSpec {
    /// Parses a sweep spec document:
    ///
    /// ```toml
    /// target = "susceptible"
    /// metric = "pathway_share"   # or final_total_exposure, final_risk
    /// pathway = "fomite"         # pathway_share only
    /// [axis1]
    /// path = "cleaning_events"
    /// values = [0, 1, 2]
    /// [axis2]
    /// path = "setting.air_changes_per_hour"
    /// values = [0.5, 1, 2]
    /// ```
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        let doc: SweepDoc = toml::from_str(text).map_err(|e| SweepError::Spec(e.to_string()))?;
        let metric = match (doc.metric.as_str(), doc.pathway.as_deref()) {
            ("final_total_exposure", None) => Metric::FinalTotalExposure,
            ("final_risk", None) => Metric::FinalRisk,
            ("pathway_share", Some(p)) => Metric::PathwayShare(
                Pathway::ALL
                    .into_iter()
                    .find(|x| x.name() == p)
                    .ok_or_else(|| SweepError::Spec(format!("unknown pathway `{p}`")))?,
            ),
            ("pathway_share", None) => {
                return Err(SweepError::Spec("pathway_share needs `pathway`".into()))
            }
            (m, Some(_)) if m != "pathway_share" => {
                return Err(SweepError::Spec(format!(
                    "`pathway` is only used with pathway_share, not {m}"
                )))
            }
            (m, _) => return Err(SweepError::Spec(format!("unknown metric `{m}`"))),
        };
        let spec = SweepSpec {
            axis1: doc.axis1,
            axis2: doc.axis2,
            metric,
            target: doc.target,
        };
        for axis in [&spec.axis1, &spec.axis2] {
            if axis.values.is_empty() || axis.values.iter().any(|v| !v.is_finite()) {
                return Err(SweepError::Spec(format!(
                    "axis `{}` needs a non-empty list of finite values",
                    axis.path
                )));
            }
        }
        Ok(spec)
    }

    /// Scenario of grid cell `(x, y)`.
    pub fn cell_scenario(&self, base: &Scenario, x: f64, y: f64) -> Result<Scenario, SweepError> {
        apply_overrides(
            base,
            &[
                (self.axis1.path.clone(), toml::Value::Float(x)),
                (self.axis2.path.clone(), toml::Value::Float(y)),
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub axis1: f64,
    pub axis2: f64,
    pub metric: f64,
}

/// Runs every cell, `axis1` outer and `axis2` inner. Cells are independent
/// and run on `jobs` worker threads (all available cores when `None`).
pub fn run_sweep(
    base: &Scenario,
    spec: &SweepSpec,
    config: &IntegrationConfig,
    jobs: Option<usize>,
) -> Result<Vec<GridCell>, SweepError> {
    let target = base
        .individual_index(&spec.target)
        .ok_or_else(|| SweepError::Spec(format!("no individual `{}`", spec.target)))?;
    let cells: Vec<(f64, f64)> = spec
        .axis1
        .values
        .iter()
        .flat_map(|&x| spec.axis2.values.iter().map(move |&y| (x, y)))
        .collect();
    // Resolve every path before spending time on integration.
    for &(x, y) in cells.iter().take(1) {
        spec.cell_scenario(base, x, y)?;
    }
    let run = |&(x, y): &(f64, f64)| -> Result<GridCell, SweepError> {
        let scenario = spec.cell_scenario(base, x, y)?;
        let result = integrate(&scenario, config)?;
        Ok(GridCell {
            axis1: x,
            axis2: y,
            metric: spec.metric.evaluate(&result, target),
        })
    };
    map_cells(&cells, run, jobs)
}

#[cfg(feature = "parallel")]
fn map_cells<F>(
    cells: &[(f64, f64)],
    run: F,
    jobs: Option<usize>,
) -> Result<Vec<GridCell>, SweepError>
where
    F: Fn(&(f64, f64)) -> Result<GridCell, SweepError> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| SweepError::Spec(format!("cannot start worker pool: {e}")))?;
    pool.install(|| cells.par_iter().map(run).collect())
}

#[cfg(not(feature = "parallel"))]
fn map_cells<F>(
    cells: &[(f64, f64)],
    run: F,
    _jobs: Option<usize>,
) -> Result<Vec<GridCell>, SweepError>
where
    F: Fn(&(f64, f64)) -> Result<GridCell, SweepError>,
{
    cells.iter().map(run).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin_fixture;

    #[test]
    fn glob_matching() {
        assert!(glob("a*c", "abc"));
        assert!(glob("*", ""));
        assert!(glob(
            "infected->*:susceptible",
            "infected->hand:susceptible"
        ));
        assert!(!glob("infected->*:susceptible", "infected->desk"));
        assert!(glob("desk", "desk"));
        assert!(!glob("desk", "desk-1"));
    }

    #[test]
    fn cleaning_events_end_at_window_close() {
        let mut s = builtin_fixture("case-study-1").unwrap();
        set_cleaning_events(&mut s, 2).unwrap();
        assert_eq!(
            s.surfaces[0].cleaning.as_ref().unwrap().event_times,
            vec![2.0, 4.0]
        );
        set_cleaning_events(&mut s, 1).unwrap();
        assert_eq!(
            s.individuals[1].hand_wash.as_ref().unwrap().event_times,
            vec![4.0]
        );
        set_cleaning_events(&mut s, 0).unwrap();
        assert!(s.individuals[1]
            .hand_wash
            .as_ref()
            .unwrap()
            .event_times
            .is_empty());
    }

    #[test]
    fn wildcard_sets_every_match() {
        let base = builtin_fixture("case-study-1").unwrap();
        let s = apply_overrides(
            &base,
            &[(
                "close_contacts.infected->*:susceptible.time_fraction".into(),
                toml::Value::Float(0.3),
            )],
        )
        .unwrap();
        let hits = s
            .close_contacts
            .iter()
            .filter(|c| c.time_fraction == 0.3)
            .count();
        assert_eq!(hits, 2);
    }

    #[test]
    fn unknown_path_is_an_error() {
        let base = builtin_fixture("case-study-1").unwrap();
        for path in [
            "setting.nope.x",
            "surfaces.window.area",
            "individuals.7.duration",
        ] {
            let err =
                apply_overrides(&base, &[(path.into(), toml::Value::Float(1.0))]).unwrap_err();
            assert!(matches!(err, SweepError::Path { .. }), "{path}: {err}");
        }
    }

    #[test]
    fn override_reaches_validation() {
        let base = builtin_fixture("case-study-1").unwrap();
        let err = apply_overrides(
            &base,
            &[("surfaces.desk.area".into(), toml::Value::Float(-1.0))],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SweepError::Scenario(ScenarioError::Invalid(_))
        ));
    }
}
