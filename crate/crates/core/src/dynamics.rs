//! Right-hand side of the load equations, presence indicators and initial
//! conditions.
//!
//! The model is linear: for fixed presence and cleaning rates,
//! `dy/dt = A y + b` where `b` collects the shedding sources. Doses and the
//! mass-balance ledger are integrals of linear functions of `y` and are
//! carried alongside as quadrature variables.

use thiserror::Error;

use crate::kernels::{self, Compartment, KernelError, RateContext};
use crate::scenario::{CleaningMode, CleaningPolicy, EventMode, Scenario};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("state has {found} {what}, scenario needs {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Exposure route of a susceptible individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pathway {
    Fomite,
    Aerosol,
    CloseContact,
}

impl Pathway {
    pub const ALL: [Pathway; 3] = [Pathway::Fomite, Pathway::Aerosol, Pathway::CloseContact];

    pub fn name(self) -> &'static str {
        match self {
            Pathway::Fomite => "fomite",
            Pathway::Aerosol => "aerosol",
            Pathway::CloseContact => "close_contact",
        }
    }
}

/// Accumulated influx onto one individual's mucosa, split by pathway.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Doses {
    pub fomite: f64,
    pub aerosol: f64,
    pub close_contact: f64,
}

impl Doses {
    pub fn total(&self) -> f64 {
        self.fomite + self.aerosol + self.close_contact
    }

    pub fn get(&self, pathway: Pathway) -> f64 {
        match pathway {
            Pathway::Fomite => self.fomite,
            Pathway::Aerosol => self.aerosol,
            Pathway::CloseContact => self.close_contact,
        }
    }
}

/// Cumulative sources and sinks of the tracked virus.
///
/// `shed` counts aerosol emission, large-droplet deposits and the transfer
/// from an infected person's (fixed) mucosa to their hand. `infected_uptake`
/// counts virus reaching an infected person's mucosa, which leaves the
/// tracked system. `inhaled` is diagnostic: inhalation by susceptibles stays
/// in the system as mucosa load.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Ledger {
    pub shed: f64,
    pub inactivated: f64,
    pub vented: f64,
    pub cleaned: f64,
    pub inhaled: f64,
    pub infected_uptake: f64,
}

pub(crate) const LEDGER_FIELDS: usize = 6;

impl Ledger {
    fn from_slice(q: &[f64]) -> Self {
        Ledger {
            shed: q[0],
            inactivated: q[1],
            vented: q[2],
            cleaned: q[3],
            inhaled: q[4],
            infected_uptake: q[5],
        }
    }

    fn to_array(self) -> [f64; LEDGER_FIELDS] {
        [
            self.shed,
            self.inactivated,
            self.vented,
            self.cleaned,
            self.inhaled,
            self.infected_uptake,
        ]
    }
}

const SHED: usize = 0;
const INACTIVATED: usize = 1;
const VENTED: usize = 2;
const CLEANED: usize = 3;
const INHALED: usize = 4;
const INFECTED_UPTAKE: usize = 5;

/// Position of each compartment in the flat state vector, and of each dose
/// and ledger entry in the flat quadrature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_surfaces: usize,
    pub n_individuals: usize,
}

impl StateLayout {
    pub fn new(scenario: &Scenario) -> Self {
        StateLayout {
            n_surfaces: scenario.surfaces.len(),
            n_individuals: scenario.individuals.len(),
        }
    }

    pub fn index(&self, c: Compartment) -> usize {
        match c {
            Compartment::Surface(i) => i,
            Compartment::Hand(j) => self.n_surfaces + j,
            Compartment::Mucosa(j) => self.n_surfaces + self.n_individuals + j,
            Compartment::Air => self.n_surfaces + 2 * self.n_individuals,
        }
    }

    pub fn len(&self) -> usize {
        self.n_surfaces + 2 * self.n_individuals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dose(&self, j: usize, pathway: Pathway) -> usize {
        3 * j + pathway as usize
    }

    pub fn quad_len(&self) -> usize {
        3 * self.n_individuals + LEDGER_FIELDS
    }

    fn ledger(&self, field: usize) -> usize {
        3 * self.n_individuals + field
    }

    pub(crate) fn cleaned_index(&self) -> usize {
        self.ledger(CLEANED)
    }
}

/// Loads, doses and ledger at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub surface_loads: Vec<f64>,
    pub hand_loads: Vec<f64>,
    pub mucosa_loads: Vec<f64>,
    pub air_load: f64,
    /// Per individual; always zero for infected individuals.
    pub doses: Vec<Doses>,
    pub ledger: Ledger,
}

impl SystemState {
    pub fn zeros(layout: &StateLayout) -> Self {
        SystemState {
            surface_loads: vec![0.0; layout.n_surfaces],
            hand_loads: vec![0.0; layout.n_individuals],
            mucosa_loads: vec![0.0; layout.n_individuals],
            air_load: 0.0,
            doses: vec![Doses::default(); layout.n_individuals],
            ledger: Ledger::default(),
        }
    }

    pub fn from_vectors(layout: &StateLayout, y: &[f64], q: &[f64]) -> Self {
        let (ns, ni) = (layout.n_surfaces, layout.n_individuals);
        SystemState {
            surface_loads: y[..ns].to_vec(),
            hand_loads: y[ns..ns + ni].to_vec(),
            mucosa_loads: y[ns + ni..ns + 2 * ni].to_vec(),
            air_load: y[ns + 2 * ni],
            doses: (0..ni)
                .map(|j| Doses {
                    fomite: q[layout.dose(j, Pathway::Fomite)],
                    aerosol: q[layout.dose(j, Pathway::Aerosol)],
                    close_contact: q[layout.dose(j, Pathway::CloseContact)],
                })
                .collect(),
            ledger: Ledger::from_slice(&q[3 * ni..]),
        }
    }

    pub fn to_vectors(&self) -> (Vec<f64>, Vec<f64>) {
        let mut y = Vec::with_capacity(self.surface_loads.len() + 2 * self.hand_loads.len() + 1);
        y.extend_from_slice(&self.surface_loads);
        y.extend_from_slice(&self.hand_loads);
        y.extend_from_slice(&self.mucosa_loads);
        y.push(self.air_load);
        let mut q: Vec<f64> = self
            .doses
            .iter()
            .flat_map(|d| [d.fomite, d.aerosol, d.close_contact])
            .collect();
        q.extend(self.ledger.to_array());
        (y, q)
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout {
            n_surfaces: self.surface_loads.len(),
            n_individuals: self.hand_loads.len(),
        }
    }

    /// Virus held in the tracked system: surfaces, hands, air and the
    /// mucosae of susceptible individuals.
    pub fn content(&self, infected: &[bool]) -> f64 {
        let mucosae: f64 = self
            .mucosa_loads
            .iter()
            .zip(infected)
            .filter(|(_, &inf)| !inf)
            .map(|(m, _)| m)
            .sum();
        self.surface_loads.iter().sum::<f64>()
            + self.hand_loads.iter().sum::<f64>()
            + self.air_load
            + mucosae
    }
}

/// Presence schedule of every individual.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSpec {
    /// `(entry_time, duration)` per individual.
    pub stays: Vec<(f64, f64)>,
    pub mode: EventMode,
    pub epsilon: f64,
}

impl IndicatorSpec {
    pub fn new(scenario: &Scenario, mode: EventMode, epsilon: f64) -> Self {
        IndicatorSpec {
            stays: scenario
                .individuals
                .iter()
                .map(|p| (p.entry_time, p.duration))
                .collect(),
            mode,
            epsilon,
        }
    }
}

/// Presence of individual `j` at time `t`: 1 on `[t_in, t_in + t_dur)` in
/// sharp mode; a trapezoid with ramps `[t_in, t_in + ε]` and
/// `[t_out, t_out + ε]` in smoothed mode.
pub fn indicator(spec: &IndicatorSpec, j: usize, t: f64) -> f64 {
    let (t_in, t_dur) = spec.stays[j];
    let t_out = t_in + t_dur;
    match spec.mode {
        EventMode::ExactJump => {
            if t >= t_in && t < t_out {
                1.0
            } else {
                0.0
            }
        }
        EventMode::Smoothed => {
            smoothed_step(t - t_in, spec.epsilon)
                * smoothed_step(t_out + spec.epsilon - t, spec.epsilon)
        }
    }
}

/// Piecewise-linear step: 0 below 0, `x/ε` on `[0, ε]`, 1 above.
pub fn smoothed_step(x: f64, epsilon: f64) -> f64 {
    (x / epsilon).clamp(0.0, 1.0)
}

/// Triangular pulse of unit area, height `1/ε` at `center`.
pub fn smoothed_delta(t: f64, center: f64, epsilon: f64) -> f64 {
    let u = (t - center).abs() / epsilon;
    if u >= 1.0 {
        0.0
    } else {
        (1.0 - u) / epsilon
    }
}

/// Time-dependent coefficients of the linear system: presence of each
/// individual and the first-order cleaning rate (per hour) acting on each
/// surface and hand.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulation {
    pub presence: Vec<f64>,
    pub surface_cleaning: Vec<f64>,
    pub hand_cleaning: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LdSource {
    emitter: usize,
    acceptor: Compartment,
    rate: f64,
}

/// Everything needed to evaluate the right-hand side of one scenario.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub layout: StateLayout,
    pub ctx: RateContext,
    pub indicator: IndicatorSpec,
    pub infected: Vec<bool>,
    respiration: Vec<f64>,
    aerosol: Vec<f64>,
    shedding: Vec<f64>,
    ld: Vec<LdSource>,
    surface_area: Vec<f64>,
    hand_area: Vec<f64>,
    air_volume: f64,
    ventilation_flow: f64,
    surface_cleaning: Vec<Option<CleaningPolicy>>,
    hand_washing: Vec<Option<CleaningPolicy>>,
}

impl Dynamics {
    pub fn new(scenario: &Scenario, mode: EventMode, epsilon: f64) -> Result<Self, DynamicsError> {
        let ctx = RateContext::new(scenario)?;
        Ok(Self::with_context(scenario, ctx, mode, epsilon))
    }

    pub fn with_context(
        scenario: &Scenario,
        ctx: RateContext,
        mode: EventMode,
        epsilon: f64,
    ) -> Self {
        let people = &scenario.individuals;
        let ld = ctx
            .ld_couplings
            .iter()
            .map(|l| LdSource {
                emitter: l.emitter,
                acceptor: l.acceptor,
                rate: l.coefficient * people[l.emitter].shedding_rate,
            })
            .collect();
        Dynamics {
            layout: StateLayout::new(scenario),
            indicator: IndicatorSpec::new(scenario, mode, epsilon),
            infected: people.iter().map(|p| p.infected).collect(),
            respiration: people.iter().map(|p| p.respiration_rate).collect(),
            aerosol: people.iter().map(kernels::aerosol_emission_rate).collect(),
            shedding: people.iter().map(|p| p.shedding_rate).collect(),
            ld,
            surface_area: scenario.surfaces.iter().map(|s| s.area).collect(),
            hand_area: people.iter().map(|p| p.hand_area).collect(),
            air_volume: scenario.setting.air_volume,
            ventilation_flow: scenario.setting.ventilation_flow,
            surface_cleaning: scenario
                .surfaces
                .iter()
                .map(|s| s.cleaning.clone())
                .collect(),
            hand_washing: people.iter().map(|p| p.hand_wash.clone()).collect(),
            ctx,
        }
    }

    pub fn mode(&self) -> EventMode {
        self.indicator.mode
    }

    /// Presence and cleaning rates at time `t`. In exact-jump mode discrete
    /// cleanings do not appear here; they are applied as jumps.
    pub fn modulation(&self, t: f64) -> Modulation {
        let eps = self.indicator.epsilon;
        let smoothed = self.indicator.mode == EventMode::Smoothed;
        let rate = |policy: &Option<CleaningPolicy>| match policy {
            None => 0.0,
            Some(p) => match p.mode {
                CleaningMode::Continuous => p.efficiency() * p.frequency,
                CleaningMode::Discrete if smoothed => p
                    .event_times
                    .iter()
                    .map(|&tk| p.efficiency() * smoothed_delta(t, tk, eps))
                    .sum(),
                CleaningMode::Discrete => 0.0,
            },
        };
        Modulation {
            presence: (0..self.layout.n_individuals)
                .map(|j| indicator(&self.indicator, j, t))
                .collect(),
            surface_cleaning: self.surface_cleaning.iter().map(rate).collect(),
            hand_cleaning: self.hand_washing.iter().map(rate).collect(),
        }
    }

    fn frozen(&self, c: Compartment) -> bool {
        matches!(c, Compartment::Mucosa(j) if self.infected[j])
    }

    fn owner(c: Compartment) -> Option<usize> {
        match c {
            Compartment::Hand(j) | Compartment::Mucosa(j) => Some(j),
            _ => None,
        }
    }

    /// Presence weight of an acceptor of deposited virus.
    fn gate(&self, m: &Modulation, c: Compartment) -> f64 {
        match c {
            Compartment::Surface(_) | Compartment::Air => 1.0,
            Compartment::Hand(j) => m.presence[j],
            Compartment::Mucosa(j) if self.infected[j] => 0.0,
            Compartment::Mucosa(j) => m.presence[j],
        }
    }

    /// Writes `dy/dt` and the quadrature integrands `dq/dt` for state `y`.
    /// With `sources = false` only the homogeneous (load-proportional) part
    /// is evaluated.
    pub fn eval(&self, m: &Modulation, y: &[f64], dy: &mut [f64], dq: &mut [f64], sources: bool) {
        let lay = &self.layout;
        let ctx = &self.ctx;
        dy.fill(0.0);
        dq.fill(0.0);
        let led = |f: usize| lay.ledger(f);
        let air = lay.index(Compartment::Air);
        let v = self.air_volume;

        for t in &ctx.transfers {
            let owner = Self::owner(t.donor).or(Self::owner(t.acceptor)).unwrap();
            let g = m.presence[owner];
            if g == 0.0 {
                continue;
            }
            let flux = g * t.rate_constant * y[lay.index(t.donor)];
            if self.frozen(t.donor) {
                dq[led(SHED)] += flux;
            } else {
                dy[lay.index(t.donor)] -= flux;
            }
            if self.frozen(t.acceptor) {
                dq[led(INFECTED_UPTAKE)] += flux;
            } else {
                dy[lay.index(t.acceptor)] += flux;
                if let Compartment::Mucosa(j) = t.acceptor {
                    dq[lay.dose(j, Pathway::Fomite)] += flux;
                }
            }
        }

        for i in 0..lay.n_surfaces {
            let s = y[i];
            let loss_inact = ctx.surface_inactivation[i] * s;
            let loss_clean = m.surface_cleaning[i] * s;
            let resusp = ctx.resuspension[i] * s;
            let deposit = kernels::sd_deposition_rate(ctx, self.surface_area[i], y[air], v);
            dy[i] += deposit - loss_inact - loss_clean - resusp;
            dy[air] += resusp - deposit;
            dq[led(INACTIVATED)] += loss_inact;
            dq[led(CLEANED)] += loss_clean;
        }

        for j in 0..lay.n_individuals {
            let g = m.presence[j];
            if g == 0.0 {
                continue;
            }
            let h = lay.index(Compartment::Hand(j));
            let loss_inact = g * ctx.hand_inactivation * y[h];
            let loss_clean = g * m.hand_cleaning[j] * y[h];
            let deposit = g * kernels::sd_deposition_rate(ctx, self.hand_area[j], y[air], v);
            dy[h] += deposit - loss_inact - loss_clean;
            dy[air] -= deposit;
            dq[led(INACTIVATED)] += loss_inact;
            dq[led(CLEANED)] += loss_clean;

            let inhaled = g * kernels::inhalation_rate(self.respiration[j], y[air], v);
            dy[air] -= inhaled;
            dq[led(INHALED)] += inhaled;
            if self.infected[j] {
                dq[led(INFECTED_UPTAKE)] += inhaled;
            } else {
                let mu = lay.index(Compartment::Mucosa(j));
                let loss = g * ctx.mucosa_inactivation * y[mu];
                dy[mu] += inhaled - loss;
                dq[led(INACTIVATED)] += loss;
                dq[lay.dose(j, Pathway::Aerosol)] += inhaled;
            }
        }

        let loss_inact = ctx.air_inactivation * y[air];
        let vented = self.ventilation_flow * y[air] / v;
        dy[air] -= loss_inact + vented;
        dq[led(INACTIVATED)] += loss_inact;
        dq[led(VENTED)] += vented;

        if !sources {
            return;
        }
        for j in 0..lay.n_individuals {
            let g = m.presence[j];
            if g == 0.0 {
                continue;
            }
            let emitted = g * self.aerosol[j];
            dy[air] += emitted;
            dq[led(SHED)] += emitted;
            if !self.infected[j] {
                let loss = g * self.shedding[j];
                dy[lay.index(Compartment::Mucosa(j))] -= loss;
                dq[led(SHED)] -= loss;
            }
        }
        for src in &self.ld {
            let amount = m.presence[src.emitter] * self.gate(m, src.acceptor) * src.rate;
            if amount == 0.0 {
                continue;
            }
            dy[lay.index(src.acceptor)] += amount;
            dq[led(SHED)] += amount;
            if let Compartment::Mucosa(j) = src.acceptor {
                dq[lay.dose(j, Pathway::CloseContact)] += amount;
            }
        }
    }

    /// Time derivative of `state` at `t`.
    pub fn rhs(&self, state: &SystemState, t: f64) -> Result<SystemState, DynamicsError> {
        let lay = state.layout();
        for (what, expected, found) in [
            ("surfaces", self.layout.n_surfaces, lay.n_surfaces),
            ("individuals", self.layout.n_individuals, lay.n_individuals),
            (
                "mucosae",
                self.layout.n_individuals,
                state.mucosa_loads.len(),
            ),
            ("dose entries", self.layout.n_individuals, state.doses.len()),
        ] {
            if expected != found {
                return Err(DynamicsError::Dimension {
                    what,
                    expected,
                    found,
                });
            }
        }
        let (y, _) = state.to_vectors();
        let mut dy = vec![0.0; self.layout.len()];
        let mut dq = vec![0.0; self.layout.quad_len()];
        self.eval(&self.modulation(t), &y, &mut dy, &mut dq, true);
        Ok(SystemState::from_vectors(&self.layout, &dy, &dq))
    }

    /// Applies one instantaneous cleaning to `target`, returning the load
    /// removed.
    pub(crate) fn apply_jump(
        &self,
        y: &mut [f64],
        target: Compartment,
        policy: &CleaningPolicy,
    ) -> f64 {
        let k = self.layout.index(target);
        let pre = y[k];
        y[k] = kernels::discrete_cleaning_jump(policy, pre);
        pre - y[k]
    }

    pub(crate) fn surface_policy(&self, i: usize) -> Option<&CleaningPolicy> {
        self.surface_cleaning[i].as_ref()
    }

    pub(crate) fn hand_policy(&self, j: usize) -> Option<&CleaningPolicy> {
        self.hand_washing[j].as_ref()
    }

    /// Aerosol emission rate when every infected individual is present.
    pub fn total_aerosol_emission(&self) -> f64 {
        self.aerosol.iter().sum()
    }

    /// First-order removal rate of air when everyone is present, per hour.
    pub fn air_removal_rate(&self) -> f64 {
        let v = self.air_volume;
        self.ventilation_flow / v
            + self.ctx.air_inactivation
            + self.respiration.iter().sum::<f64>() / v
    }
}

/// Time derivative of `state` at `t` in sharp-indicator mode.
pub fn rhs(
    scenario: &Scenario,
    ctx: &RateContext,
    state: &SystemState,
    t: f64,
) -> Result<SystemState, DynamicsError> {
    Dynamics::with_context(
        scenario,
        ctx.clone(),
        scenario.event_mode,
        scenario.event_smoothing_epsilon,
    )
    .rhs(state, t)
}

/// Uncontaminated room and susceptibles; infected mucosae at their initial
/// load and infected hands at the hand–mucosa equilibrium.
pub fn initial_state(scenario: &Scenario, ctx: &RateContext) -> SystemState {
    let layout = StateLayout::new(scenario);
    let mut state = SystemState::zeros(&layout);
    for (i, s) in scenario.surfaces.iter().enumerate() {
        state.surface_loads[i] = scenario
            .initial_surface_loads
            .get(&s.id)
            .copied()
            .unwrap_or(0.0);
    }
    for (j, p) in scenario.individuals.iter().enumerate() {
        if !p.infected {
            continue;
        }
        let (hand, mucosa) = (Compartment::Hand(j), Compartment::Mucosa(j));
        let c_mh = ctx.transfer_constant(mucosa, hand).unwrap_or(0.0);
        let c_hm = ctx.transfer_constant(hand, mucosa).unwrap_or(0.0);
        let self_ld = kernels::ld_deposition_rate(ctx, j, p, hand);
        state.mucosa_loads[j] = p.initial_mucosa_load;
        state.hand_loads[j] =
            (c_mh * p.initial_mucosa_load + self_ld) / (c_hm + ctx.hand_inactivation);
    }
    state
}
