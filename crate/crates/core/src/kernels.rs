//! Rate kernels: every additive term on the right-hand sides of the model.
//!
//! All kernels are linear in the load they act on. Presence gating is the
//! caller's job.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use thiserror::Error;

use crate::scenario::{CleaningMode, CleaningPolicy, Individual, ObjectRef, Scenario, Setting};

/// Index of a tracked compartment within one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Compartment {
    Surface(usize),
    Hand(usize),
    Mucosa(usize),
    Air,
}

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("no touch contact between {0:?} and {1:?}")]
    UnknownPair(Compartment, Compartment),
    #[error("continuous cleaning rate requested for a discrete cleaning policy")]
    DiscretePolicy,
    #[error("{0}")]
    InvalidContext(String),
}

/// First-order transfer `donor -> acceptor` by touch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub donor: Compartment,
    pub acceptor: Compartment,
    /// c = ρ · f · A_c / A_donor, per hour.
    pub rate_constant: f64,
}

/// Large-droplet coupling of an emitter to an acceptor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdCoupling {
    pub emitter: usize,
    pub acceptor: Compartment,
    /// θ · β · f_LD · (1 − mask capture), dimensionless.
    pub coefficient: f64,
}

/// Rate constants precomputed once per scenario.
#[derive(Debug, Clone)]
pub struct RateContext {
    pub n_surfaces: usize,
    pub n_individuals: usize,
    pub transfers: Vec<Transfer>,
    transfer_index: BTreeMap<(Compartment, Compartment), usize>,
    pub ld_couplings: Vec<LdCoupling>,
    pub surface_inactivation: Vec<f64>,
    pub hand_inactivation: f64,
    pub mucosa_inactivation: f64,
    pub air_inactivation: f64,
    /// Small-droplet deposition constant, m³/(cm²·h).
    pub deposition_constant: f64,
    /// Resuspension rate constant per surface, per hour.
    pub resuspension: Vec<f64>,
}

impl RateContext {
    pub fn new(scenario: &Scenario) -> Result<Self, KernelError> {
        let err = |m: String| KernelError::InvalidContext(m);
        let half_life = |name: &str| {
            scenario
                .material(name)
                .map(|m| LN_2 / m.half_life)
                .ok_or_else(|| err(format!("unknown material `{name}`")))
        };
        let compartment = |obj: &ObjectRef| -> Result<Compartment, KernelError> {
            match obj {
                ObjectRef::Surface(id) => scenario.surface_index(id).map(Compartment::Surface),
                ObjectRef::Hand(id) => scenario.individual_index(id).map(Compartment::Hand),
                ObjectRef::Mucosa(id) => scenario.individual_index(id).map(Compartment::Mucosa),
            }
            .ok_or_else(|| err(format!("unknown object `{obj}`")))
        };

        let mut ctx = RateContext {
            n_surfaces: scenario.surfaces.len(),
            n_individuals: scenario.individuals.len(),
            transfers: Vec::new(),
            transfer_index: BTreeMap::new(),
            ld_couplings: Vec::new(),
            surface_inactivation: scenario
                .surfaces
                .iter()
                .map(|s| half_life(&s.material))
                .collect::<Result<_, _>>()?,
            hand_inactivation: half_life(&scenario.hand_material)?,
            mucosa_inactivation: half_life(&scenario.mucosa_material)?,
            air_inactivation: half_life(&scenario.air_material)?,
            deposition_constant: scenario.deposition_rate_constant,
            resuspension: scenario
                .surfaces
                .iter()
                .map(|s| {
                    scenario
                        .resuspension_rates
                        .get(&s.id)
                        .copied()
                        .unwrap_or(0.0)
                })
                .collect(),
        };

        for (j, p) in scenario.individuals.iter().enumerate() {
            if p.face_touch_frequency > 0.0 {
                let touches = p.face_touch_frequency * p.face_contact_area;
                ctx.push_transfer(
                    Compartment::Hand(j),
                    Compartment::Mucosa(j),
                    p.hand_to_mucosa_fraction * touches / p.hand_area,
                )?;
                ctx.push_transfer(
                    Compartment::Mucosa(j),
                    Compartment::Hand(j),
                    p.mucosa_to_hand_fraction * touches / p.mucosa_area,
                )?;
            }
        }
        for c in &scenario.contacts {
            let (x, y) = (compartment(&c.donor)?, compartment(&c.acceptor)?);
            check_pair(x, y)?;
            let area_x = scenario.object_area(&c.donor).unwrap_or(f64::NAN);
            let area_y = scenario.object_area(&c.acceptor).unwrap_or(f64::NAN);
            let touches = c.touch_frequency * c.contact_area;
            ctx.push_transfer(x, y, c.transfer_fraction_forward * touches / area_x)?;
            ctx.push_transfer(y, x, c.transfer_fraction_backward * touches / area_y)?;
        }

        for c in &scenario.close_contacts {
            let emitter = scenario
                .individual_index(&c.emitter)
                .ok_or_else(|| err(format!("unknown emitter `{}`", c.emitter)))?;
            let acceptor = compartment(&c.acceptor)?;
            if acceptor == Compartment::Mucosa(emitter) {
                return Err(err(format!(
                    "`{}` cannot deposit onto own mucosa",
                    c.emitter
                )));
            }
            let landing = match (&c.landing_fraction, &c.acceptor) {
                (Some(b), _) => *b,
                (None, ObjectRef::Surface(id)) => scenario
                    .surface(id)
                    .map(|s| s.ld_capture_fraction)
                    .unwrap_or(0.0),
                (None, other) => {
                    return Err(err(format!(
                        "close contact onto `{other}` needs a landing fraction"
                    )))
                }
            };
            let p = &scenario.individuals[emitter];
            ctx.ld_couplings.push(LdCoupling {
                emitter,
                acceptor,
                coefficient: ld_coefficient(c.time_fraction, landing, p),
            });
        }

        let all_constants = ctx
            .transfers
            .iter()
            .map(|t| t.rate_constant)
            .chain(ctx.ld_couplings.iter().map(|l| l.coefficient))
            .chain(ctx.surface_inactivation.iter().copied())
            .chain(ctx.resuspension.iter().copied())
            .chain([
                ctx.hand_inactivation,
                ctx.mucosa_inactivation,
                ctx.air_inactivation,
                ctx.deposition_constant,
            ]);
        for c in all_constants {
            if !(c.is_finite() && c >= 0.0) {
                return Err(err(format!("rate constant {c} is negative or not finite")));
            }
        }
        Ok(ctx)
    }

    fn push_transfer(
        &mut self,
        donor: Compartment,
        acceptor: Compartment,
        rate_constant: f64,
    ) -> Result<(), KernelError> {
        if self.transfer_index.contains_key(&(donor, acceptor)) {
            return Err(KernelError::InvalidContext(format!(
                "duplicate transfer {donor:?} -> {acceptor:?}"
            )));
        }
        self.transfer_index
            .insert((donor, acceptor), self.transfers.len());
        self.transfers.push(Transfer {
            donor,
            acceptor,
            rate_constant,
        });
        Ok(())
    }

    /// c_x→y, if x and y are in touch contact.
    pub fn transfer_constant(&self, donor: Compartment, acceptor: Compartment) -> Option<f64> {
        self.transfer_index
            .get(&(donor, acceptor))
            .map(|&k| self.transfers[k].rate_constant)
    }

    pub fn inactivation_constant(&self, x: Compartment) -> f64 {
        match x {
            Compartment::Surface(i) => self.surface_inactivation[i],
            Compartment::Hand(_) => self.hand_inactivation,
            Compartment::Mucosa(_) => self.mucosa_inactivation,
            Compartment::Air => self.air_inactivation,
        }
    }

    /// Sum of LD coefficients from `emitter` onto `acceptor`.
    pub fn ld_coefficient(&self, emitter: usize, acceptor: Compartment) -> f64 {
        self.ld_couplings
            .iter()
            .filter(|l| l.emitter == emitter && l.acceptor == acceptor)
            .map(|l| l.coefficient)
            .sum()
    }

    /// Whether air evolves independently of surfaces and hands.
    pub fn air_decoupled(&self) -> bool {
        self.deposition_constant == 0.0 && self.resuspension.iter().all(|&r| r == 0.0)
    }
}

fn check_pair(x: Compartment, y: Compartment) -> Result<(), KernelError> {
    use Compartment::*;
    match (x, y) {
        (Surface(_), Hand(_)) | (Hand(_), Surface(_)) => Ok(()),
        (Hand(a), Mucosa(b)) | (Mucosa(a), Hand(b)) if a == b => Ok(()),
        _ => Err(KernelError::UnknownPair(x, y)),
    }
}

/// θ · β · f_LD · (1 − mask capture).
pub fn ld_coefficient(time_fraction: f64, landing_fraction: f64, emitter: &Individual) -> f64 {
    time_fraction
        * landing_fraction
        * emitter.fraction_large_droplets
        * (1.0 - emitter.mask_capture_efficacy)
}

/// T_x→y = c_x→y · V_x. Fails for pairs that are not in touch contact.
pub fn fomite_transfer_rate(
    ctx: &RateContext,
    donor: Compartment,
    acceptor: Compartment,
    load: f64,
) -> Result<f64, KernelError> {
    ctx.transfer_constant(donor, acceptor)
        .map(|c| c * load)
        .ok_or(KernelError::UnknownPair(donor, acceptor))
}

/// Small-droplet emission into room air, (1 − f_LD) · α, reduced by the
/// aerosol filtration of a face covering.
pub fn aerosol_emission_rate(individual: &Individual) -> f64 {
    (1.0 - individual.fraction_large_droplets)
        * individual.shedding_rate
        * (1.0 - individual.mask_aerosol_filtration)
}

/// G_j→x = θ · β · f_LD · α · (1 − mask capture).
pub fn ld_deposition_rate(
    ctx: &RateContext,
    emitter: usize,
    emitter_params: &Individual,
    acceptor: Compartment,
) -> f64 {
    ctx.ld_coefficient(emitter, acceptor) * emitter_params.shedding_rate
}

/// Small-droplet deposition onto an object of `area` cm².
pub fn sd_deposition_rate(ctx: &RateContext, area: f64, air_load: f64, air_volume: f64) -> f64 {
    ctx.deposition_constant * area * air_load / air_volume
}

pub fn inactivation_rate(ctx: &RateContext, x: Compartment, load: f64) -> f64 {
    ctx.inactivation_constant(x) * load
}

/// (LRV · ln 10) · ω · V for continuous cleaning.
pub fn continuous_cleaning_rate(policy: &CleaningPolicy, load: f64) -> Result<f64, KernelError> {
    match policy.mode {
        CleaningMode::Continuous => Ok(policy.efficiency() * policy.frequency * load),
        CleaningMode::Discrete => Err(KernelError::DiscretePolicy),
    }
}

/// Load remaining after one instantaneous cleaning: V · 10^(−LRV).
pub fn discrete_cleaning_jump(policy: &CleaningPolicy, load: f64) -> f64 {
    load / 10f64.powf(policy.lrv)
}

/// Virus inhaled per hour at breathing rate `respiration_rate` (m³/h).
pub fn inhalation_rate(respiration_rate: f64, air_load: f64, air_volume: f64) -> f64 {
    respiration_rate * air_load / air_volume
}

/// Removal by ventilation, Q · V_air / v.
pub fn ventilation_rate(setting: &Setting, air_load: f64) -> f64 {
    setting.ventilation_flow * air_load / setting.air_volume
}
