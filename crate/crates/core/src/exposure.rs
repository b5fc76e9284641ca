//! Pathway-resolved exposure, infection risk and the mass-balance audit.

use thiserror::Error;

use crate::dynamics::{Doses, Ledger, Pathway, SystemState};
use crate::integrator::EventRecord;
use crate::scenario::EventMode;

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub scenario_name: String,
    /// SHA-256 of the canonical scenario document.
    pub scenario_hash: String,
    pub mode: EventMode,
    pub epsilon: f64,
    pub rtol: f64,
    pub atol: f64,
    pub grid_step: f64,
    pub observation_end: f64,
    /// Whether air was integrated separately from the fomite network.
    pub partitioned: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub factorizations: usize,
}

/// Trajectory and bookkeeping of one run. `states[k]` is the state at
/// `times[k]`, after any jump at that instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub events: Vec<EventRecord>,
    pub initial_state: SystemState,
    pub surface_ids: Vec<String>,
    pub individual_ids: Vec<String>,
    pub infected: Vec<bool>,
    pub dose_response: Vec<f64>,
    pub steady_state_air: f64,
    pub metadata: RunMetadata,
    pub stats: SolverStats,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExposureError {
    #[error("no individual `{0}`")]
    UnknownIndividual(String),
    #[error("no surface `{0}`")]
    UnknownSurface(String),
    #[error("`{id}` has received no virus by t = {t} h; pathway shares are undefined")]
    ZeroDose { id: String, t: f64 },
    #[error("t = {0} h is outside the simulated window")]
    OutOfRange(f64),
}

/// Fractions of the accumulated dose per pathway; they sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathwayShares {
    pub fomite: f64,
    pub aerosol: f64,
    pub close_contact: f64,
}

impl PathwayShares {
    pub fn get(&self, pathway: Pathway) -> f64 {
        match pathway {
            Pathway::Fomite => self.fomite,
            Pathway::Aerosol => self.aerosol,
            Pathway::CloseContact => self.close_contact,
        }
    }
}

/// Probability of infection after `dose` particles: `1 − exp(−dose/k_d)`.
pub fn infection_risk(dose: f64, dose_response: f64) -> f64 {
    -(-dose / dose_response).exp_m1()
}

impl SimulationResult {
    pub fn individual_index(&self, id: &str) -> Result<usize, ExposureError> {
        self.individual_ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| ExposureError::UnknownIndividual(id.to_string()))
    }

    pub fn surface_index(&self, id: &str) -> Result<usize, ExposureError> {
        self.surface_ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| ExposureError::UnknownSurface(id.to_string()))
    }

    pub fn final_state(&self) -> &SystemState {
        self.states.last().expect("a result has at least one state")
    }

    pub fn susceptible_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.infected.len()).filter(|&j| !self.infected[j])
    }

    /// Doses of individual `j` at time `t`, linearly interpolated between
    /// grid points.
    pub fn doses_at(&self, j: usize, t: f64) -> Result<Doses, ExposureError> {
        let (k, w) = self.locate(t)?;
        let a = self.states[k].doses[j];
        if w == 0.0 {
            return Ok(a);
        }
        let b = self.states[k + 1].doses[j];
        let mix = |x: f64, y: f64| x + w * (y - x);
        Ok(Doses {
            fomite: mix(a.fomite, b.fomite),
            aerosol: mix(a.aerosol, b.aerosol),
            close_contact: mix(a.close_contact, b.close_contact),
        })
    }

    fn locate(&self, t: f64) -> Result<(usize, f64), ExposureError> {
        let (first, last) = (self.times[0], *self.times.last().unwrap());
        if !(first..=last).contains(&t) {
            return Err(ExposureError::OutOfRange(t));
        }
        let k = self.times.partition_point(|&x| x <= t).saturating_sub(1);
        if k + 1 == self.times.len() || self.times[k] == t {
            return Ok((k, 0.0));
        }
        Ok((k, (t - self.times[k]) / (self.times[k + 1] - self.times[k])))
    }

    pub fn final_doses(&self, j: usize) -> Doses {
        self.final_state().doses[j]
    }

    /// Influx-dose risk of individual `j` at the end of the run.
    pub fn final_risk(&self, j: usize) -> f64 {
        infection_risk(self.final_doses(j).total(), self.dose_response[j])
    }

    /// Risk from the load currently on the mucosa, `1 − exp(−V_M/k_d)`;
    /// never larger than the influx-dose risk.
    pub fn final_mucosa_risk(&self, j: usize) -> f64 {
        infection_risk(self.final_state().mucosa_loads[j], self.dose_response[j])
    }

    pub fn series<F: Fn(&SystemState) -> f64>(&self, f: F) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }

    pub fn surface_series(&self, i: usize) -> Vec<f64> {
        self.series(|s| s.surface_loads[i])
    }

    pub fn air_series(&self) -> Vec<f64> {
        self.series(|s| s.air_load)
    }

    /// Grid index of time `t` (exact match within 1e-9 h).
    pub fn time_index(&self, t: f64) -> Result<usize, ExposureError> {
        self.times
            .iter()
            .position(|&x| (x - t).abs() <= 1e-9)
            .ok_or(ExposureError::OutOfRange(t))
    }
}

/// Relative contribution of each pathway to the dose of individual `j` at
/// time `t`.
pub fn pathway_shares(
    result: &SimulationResult,
    j: usize,
    t: f64,
) -> Result<PathwayShares, ExposureError> {
    let d = result.doses_at(j, t)?;
    let total = d.total();
    if !(total > 0.0) {
        return Err(ExposureError::ZeroDose {
            id: result.individual_ids[j].clone(),
            t,
        });
    }
    Ok(PathwayShares {
        fomite: d.fomite / total,
        aerosol: d.aerosol / total,
        close_contact: d.close_contact / total,
    })
}

/// Closure of `shed + initial content = content + sinks` at the end of a
/// run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassBalance {
    pub ledger: Ledger,
    pub initial_content: f64,
    pub final_content: f64,
    /// `shed + initial − final − inactivated − vented − cleaned − infected_uptake`.
    pub residual: f64,
    /// `|residual| / shed` (or the absolute residual when nothing was shed).
    pub relative_residual: f64,
}

pub fn mass_balance_report(result: &SimulationResult) -> MassBalance {
    let last = result.final_state();
    let ledger = last.ledger;
    let initial_content = result.initial_state.content(&result.infected);
    let final_content = last.content(&result.infected);
    let residual = ledger.shed + initial_content
        - final_content
        - ledger.inactivated
        - ledger.vented
        - ledger.cleaned
        - ledger.infected_uptake;
    let relative_residual = if ledger.shed > 0.0 {
        residual.abs() / ledger.shed
    } else {
        residual.abs()
    };
    MassBalance {
        ledger,
        initial_content,
        final_content,
        residual,
        relative_residual,
    }
}
