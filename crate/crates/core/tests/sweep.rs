mod common;

use common::toy;
use fomes_core::scenario::builtin_fixture;
use fomes_core::sweep::{apply_overrides, run_sweep, Metric, SweepError, SweepSpec};
use fomes_core::{integrate, IntegrationConfig};

const SPEC: &str = r#"
target = "susceptible"
metric = "final_total_exposure"
[axis1]
path = "cleaning_events"
values = [0, 1, 2]
[axis2]
path = "setting.air_changes_per_hour"
values = [0.5, 2.0]
"#;

fn set(path: &str, value: f64) -> (String, toml::Value) {
    (path.to_string(), toml::Value::Float(value))
}

#[test]
fn cell_matches_standalone_run() {
    let base = builtin_fixture("case-study-1").unwrap();
    let spec = SweepSpec::parse(SPEC).unwrap();
    let config = IntegrationConfig::for_scenario(&base);
    let grid = run_sweep(&base, &spec, &config, Some(2)).unwrap();
    assert_eq!(grid.len(), 6);

    let cell = grid
        .iter()
        .find(|c| c.axis1 == 1.0 && c.axis2 == 2.0)
        .unwrap();
    let scenario = apply_overrides(
        &base,
        &[
            set("cleaning_events", 1.0),
            set("setting.air_changes_per_hour", 2.0),
        ],
    )
    .unwrap();
    let result = integrate(&scenario, &config).unwrap();
    let j = result.individual_index("susceptible").unwrap();
    assert_eq!(
        cell.metric.to_bits(),
        result.final_doses(j).total().to_bits()
    );
}

#[test]
fn parallel_equals_serial() {
    let base = builtin_fixture("case-study-1").unwrap();
    let spec = SweepSpec::parse(SPEC).unwrap();
    let config = IntegrationConfig::for_scenario(&base);
    let serial = run_sweep(&base, &spec, &config, Some(1)).unwrap();
    let parallel = run_sweep(&base, &spec, &config, Some(4)).unwrap();
    assert_eq!(serial, parallel);
    let order: Vec<(f64, f64)> = serial.iter().map(|c| (c.axis1, c.axis2)).collect();
    assert_eq!(
        order,
        [
            (0.0, 0.5),
            (0.0, 2.0),
            (1.0, 0.5),
            (1.0, 2.0),
            (2.0, 0.5),
            (2.0, 2.0)
        ]
    );
}

#[test]
fn more_cleaning_means_less_exposure() {
    let base = builtin_fixture("case-study-1").unwrap();
    let spec = SweepSpec::parse(SPEC).unwrap();
    let grid = run_sweep(&base, &spec, &IntegrationConfig::for_scenario(&base), None).unwrap();
    for ach in [0.5, 2.0] {
        let column: Vec<f64> = grid
            .iter()
            .filter(|c| c.axis2 == ach)
            .map(|c| c.metric)
            .collect();
        assert!(column.windows(2).all(|w| w[1] < w[0]), "{column:?}");
    }
}

#[test]
fn full_mask_blocks_close_contact() {
    let base = builtin_fixture("case-study-1").unwrap();
    let scenario = apply_overrides(
        &base,
        &[set("individuals.infected.mask_capture_efficacy", 1.0)],
    )
    .unwrap();
    assert_eq!(scenario.individuals[0].mask_capture_efficacy, 1.0);
    let result = integrate(&scenario, &IntegrationConfig::for_scenario(&scenario)).unwrap();
    let j = result.individual_index("susceptible").unwrap();
    assert_eq!(result.final_doses(j).close_contact, 0.0);
    assert!(result.final_doses(j).aerosol > 0.0);
}

#[test]
fn glob_and_index_paths() {
    let base = toy();
    let scenario = apply_overrides(&base, &[set("surfaces.*.area", 99.0)]).unwrap();
    assert!(scenario.surfaces.iter().all(|s| s.area == 99.0));
    let scenario = apply_overrides(&base, &[set("individuals.1.respiration_rate", 0.3)]).unwrap();
    assert_eq!(scenario.individuals[1].respiration_rate, 0.3);
    assert_eq!(
        scenario.individuals[2].respiration_rate,
        base.individuals[2].respiration_rate
    );
    let scenario = apply_overrides(
        &base,
        &[set("contacts.hand:ben->table.touch_frequency", 4.0)],
    )
    .unwrap();
    assert_eq!(scenario.contacts[2].touch_frequency, 4.0);
    assert_eq!(
        scenario.contacts[0].touch_frequency,
        base.contacts[0].touch_frequency
    );
}

#[test]
fn unresolvable_paths_are_errors() {
    let base = toy();
    for path in [
        "setting.nothing",
        "surfaces.sofa.area",
        "individuals.7.duration",
        "setting..air_volume",
    ] {
        assert!(apply_overrides(&base, &[set(path, 1.0)]).is_err(), "{path}");
    }
    assert!(matches!(
        apply_overrides(&base, &[set("cleaning_events", 1.5)]),
        Err(SweepError::Path { .. })
    ));
    // Overrides are validated like any scenario.
    assert!(matches!(
        apply_overrides(&base, &[set("close_contacts.0.time_fraction", 1.2)]),
        Err(SweepError::Scenario(_))
    ));

    let spec = SweepSpec::parse(&SPEC.replace("cleaning_events", "setting.bogus")).unwrap();
    assert!(matches!(
        run_sweep(
            &builtin_fixture("case-study-1").unwrap(),
            &spec,
            &IntegrationConfig::default(),
            Some(1)
        ),
        Err(SweepError::Path { .. }) | Err(SweepError::Scenario(_))
    ));
}

#[test]
fn spec_parsing() {
    let spec = SweepSpec::parse(&SPEC.replace(
        "metric = \"final_total_exposure\"",
        "metric = \"pathway_share\"\npathway = \"fomite\"",
    ))
    .unwrap();
    assert_eq!(
        spec.metric,
        Metric::PathwayShare(fomes_core::dynamics::Pathway::Fomite)
    );
    for bad in [
        SPEC.replace("final_total_exposure", "peak_load"),
        SPEC.replace("final_total_exposure", "pathway_share"),
        SPEC.replace("values = [0, 1, 2]", "values = []"),
        SPEC.replace("target", "who"),
    ] {
        assert!(
            matches!(SweepSpec::parse(&bad), Err(SweepError::Spec(_))),
            "{bad}"
        );
    }
}

#[test]
fn full_mask_removes_droplet_contamination() {
    let base = builtin_fixture("case-study-1").unwrap();
    let masked = apply_overrides(
        &base,
        &[set("individuals.infected.mask_capture_efficacy", 1.0)],
    )
    .unwrap();
    let silent = apply_overrides(&base, &[set("close_contacts.*.time_fraction", 0.0)]).unwrap();
    let (a, b) = (
        integrate(&masked, &IntegrationConfig::for_scenario(&masked)).unwrap(),
        integrate(&silent, &IntegrationConfig::for_scenario(&silent)).unwrap(),
    );
    for (sa, sb) in a.states.iter().zip(&b.states) {
        assert_eq!(sa.surface_loads, sb.surface_loads);
        assert_eq!(sa.doses, sb.doses);
    }
}

#[test]
fn cleaning_count_by_close_contact_fraction() {
    let base = builtin_fixture("case-study-1").unwrap();
    let spec = SweepSpec::parse(
        r#"
target = "susceptible"
metric = "final_total_exposure"
[axis1]
path = "cleaning_events"
values = [0, 1, 2]
[axis2]
path = "close_contacts.*.time_fraction"
values = [0.9]
"#,
    )
    .unwrap();
    let grid = run_sweep(&base, &spec, &IntegrationConfig::for_scenario(&base), None).unwrap();
    let metric: Vec<f64> = grid.iter().map(|c| c.metric).collect();
    assert_eq!(metric.len(), 3);
    assert!(metric.windows(2).all(|w| w[1] < w[0]), "{metric:?}");
}
