//! Transmission of a respiratory virus inside one enclosed setting, through
//! contaminated surfaces, close-contact large droplets and room air.
//!
//! A [`scenario::Scenario`] describes the room, the people, the objects they
//! touch and the cleaning regime. [`integrator::integrate`] solves the linear
//! load equations and returns a [`exposure::SimulationResult`] with
//! pathway-resolved doses, infection risks and a mass-balance ledger.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod exposure;
pub mod integrator;
pub mod kernels;
pub mod scenario;
pub mod sweep;

pub use exposure::SimulationResult;
pub use integrator::{integrate, IntegrationConfig, IntegrationError};
pub use scenario::{builtin_fixture, parse_scenario, Scenario};
