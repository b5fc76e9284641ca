//! Scenario data model, validation, document format and built-in fixtures.

mod fixtures;
mod io;
mod model;
mod validate;

pub use fixtures::{
    builtin_fixture, case_study_3, small_office, FixtureName, SmallOfficeLayout, SmallOfficeParams,
    FIXTURE_NAMES,
};
pub use io::{parse_scenario, to_toml_string, ScenarioError};
pub use model::{
    CleaningMode, CleaningPolicy, CloseContactSpec, ContactSpec, EventMode, Individual, Material,
    ObjectRef, Scenario, Setting, Surface, DEFAULT_SMOOTHING_EPSILON,
};
pub use validate::{validate, Finding, Severity, SMOOTHING_DURATION_RATIO};

pub(crate) use io::ensure_valid;
