//! Output files: `timeseries.csv`, `summary.toml` and `grid.csv`.

use std::path::Path;

use fomes_core::dynamics::Pathway;
use fomes_core::exposure::{mass_balance_report, pathway_shares};
use fomes_core::sweep::GridCell;
use fomes_core::SimulationResult;
use serde::Serialize;

/// Column order: `t`, `surface:<id>` per surface, `hand:<id>` and
/// `mucosa:<id>` per individual, `air`, then `dose_<pathway>:<id>` for each
/// individual and pathway.
pub fn timeseries_header(result: &SimulationResult) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    header.extend(result.surface_ids.iter().map(|id| format!("surface:{id}")));
    header.extend(result.individual_ids.iter().map(|id| format!("hand:{id}")));
    header.extend(
        result
            .individual_ids
            .iter()
            .map(|id| format!("mucosa:{id}")),
    );
    header.push("air".into());
    for id in &result.individual_ids {
        header.extend(
            Pathway::ALL
                .iter()
                .map(|p| format!("dose_{}:{id}", p.name())),
        );
    }
    header
}

pub fn write_timeseries(result: &SimulationResult, path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(timeseries_header(result))?;
    for (t, s) in result.times.iter().zip(&result.states) {
        let mut row = vec![*t];
        row.extend(&s.surface_loads);
        row.extend(&s.hand_loads);
        row.extend(&s.mucosa_loads);
        row.push(s.air_load);
        for d in &s.doses {
            row.extend(Pathway::ALL.iter().map(|&p| d.get(p)));
        }
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid(grid: &[GridCell], path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["axis1", "axis2", "metric"])?;
    for c in grid {
        w.write_record([c.axis1, c.axis2, c.metric].iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    metadata: Metadata,
    /// Air load at which emission balances removal, particles.
    steady_state_air: f64,
    mass_balance: Balance,
    individuals: Vec<Person>,
}

#[derive(Serialize)]
struct Metadata {
    scenario: String,
    scenario_sha256: String,
    mode: String,
    epsilon: f64,
    rtol: f64,
    atol: f64,
    grid_step: f64,
    observation_end: f64,
    air_partitioned: bool,
    accepted_steps: usize,
    rejected_steps: usize,
}

#[derive(Serialize)]
struct Balance {
    shed: f64,
    inactivated: f64,
    vented: f64,
    cleaned: f64,
    inhaled: f64,
    infected_uptake: f64,
    initial_content: f64,
    final_content: f64,
    residual: f64,
    relative_residual: f64,
}

#[derive(Serialize)]
struct Person {
    id: String,
    infected: bool,
    dose_fomite: f64,
    dose_aerosol: f64,
    dose_close_contact: f64,
    dose_total: f64,
    risk: f64,
    mucosa_risk: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    shares: Option<Shares>,
}

#[derive(Serialize)]
struct Shares {
    fomite: f64,
    aerosol: f64,
    close_contact: f64,
}

/// Scalar results as a TOML document. Shares are at the end of the run and
/// omitted for individuals with zero dose.
pub fn summary(result: &SimulationResult) -> String {
    let m = &result.metadata;
    let balance = mass_balance_report(result);
    let t_end = *result.times.last().unwrap();
    let individuals = (0..result.individual_ids.len())
        .map(|j| {
            let d = result.final_doses(j);
            Person {
                id: result.individual_ids[j].clone(),
                infected: result.infected[j],
                dose_fomite: d.fomite,
                dose_aerosol: d.aerosol,
                dose_close_contact: d.close_contact,
                dose_total: d.total(),
                risk: result.final_risk(j),
                mucosa_risk: result.final_mucosa_risk(j),
                shares: pathway_shares(result, j, t_end).ok().map(|s| Shares {
                    fomite: s.fomite,
                    aerosol: s.aerosol,
                    close_contact: s.close_contact,
                }),
            }
        })
        .collect();
    let summary = Summary {
        metadata: Metadata {
            scenario: m.scenario_name.clone(),
            scenario_sha256: m.scenario_hash.clone(),
            mode: m.mode.to_string(),
            epsilon: m.epsilon,
            rtol: m.rtol,
            atol: m.atol,
            grid_step: m.grid_step,
            observation_end: m.observation_end,
            air_partitioned: m.partitioned,
            accepted_steps: result.stats.accepted_steps,
            rejected_steps: result.stats.rejected_steps,
        },
        steady_state_air: result.steady_state_air,
        mass_balance: Balance {
            shed: balance.ledger.shed,
            inactivated: balance.ledger.inactivated,
            vented: balance.ledger.vented,
            cleaned: balance.ledger.cleaned,
            inhaled: balance.ledger.inhaled,
            infected_uptake: balance.ledger.infected_uptake,
            initial_content: balance.initial_content,
            final_content: balance.final_content,
            residual: balance.residual,
            relative_residual: balance.relative_residual,
        },
        individuals,
    };
    toml::to_string(&summary).expect("summary serializes")
}
