//! Time integration of the hybrid system.
//!
//! Between breakpoints (output grid points, events, smoothing-window edges)
//! the equations are linear with piecewise-constant or piecewise-linear
//! coefficients and are solved with an L-stable, stiffly accurate
//! five-stage SDIRK method of order 4 with an embedded order-3 error
//! estimate. Doses and ledger entries are integrated with the same stage
//! weights, so linear invariants such as the mass balance hold to roundoff.
//!
//! When air does not exchange virus with surfaces (no deposition, no
//! resuspension) the air load and aerosol doses are integrated in a separate
//! scalar pass whose steps depend only on air parameters; the reported air
//! trajectory is then independent of every fomite parameter.

use std::borrow::Cow;
use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{Dynamics, DynamicsError, Modulation, SystemState};
use crate::exposure::{RunMetadata, SimulationResult, SolverStats};
use crate::kernels::{self, Compartment};
use crate::scenario::{
    to_toml_string, CleaningMode, EventMode, Scenario, SMOOTHING_DURATION_RATIO,
};

#[derive(Debug, Error, PartialEq)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} h (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t} h")]
    NonFinite { t: f64 },
    #[error("load of {compartment} fell to {value:e} at t = {t} h, below -atol")]
    NegativeLoad {
        t: f64,
        compartment: String,
        value: f64,
    },
    #[error("invalid integration config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] DynamicsError),
}

impl From<kernels::KernelError> for IntegrationError {
    fn from(e: kernels::KernelError) -> Self {
        IntegrationError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationConfig {
    pub rtol: f64,
    /// Absolute tolerance, viral particles.
    pub atol: f64,
    /// Upper bound on the step size, h.
    pub max_step: Option<f64>,
    /// Spacing of the output grid, h.
    pub grid_step: f64,
    pub mode: EventMode,
    /// Ramp and pulse width in smoothed mode, h.
    pub epsilon: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            rtol: 1e-8,
            atol: 1e-4,
            max_step: None,
            grid_step: 0.05,
            mode: EventMode::ExactJump,
            epsilon: crate::scenario::DEFAULT_SMOOTHING_EPSILON,
        }
    }
}

impl IntegrationConfig {
    /// Defaults, with event mode and ε taken from the scenario.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        IntegrationConfig {
            mode: scenario.event_mode,
            epsilon: scenario.event_smoothing_epsilon,
            ..Self::default()
        }
    }

    fn check(&self, scenario: &Scenario) -> Result<(), IntegrationError> {
        let bad = |m: String| Err(IntegrationError::InvalidConfig(m));
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return bad(format!(
                "tolerances must be > 0 (rtol {}, atol {})",
                self.rtol, self.atol
            ));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return bad(format!("grid step must be > 0 (got {})", self.grid_step));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return bad(format!("max step must be > 0 (got {h})"));
            }
        }
        if self.mode == EventMode::Smoothed {
            if !(self.epsilon > 0.0) {
                return bad(format!(
                    "smoothing epsilon must be > 0 (got {})",
                    self.epsilon
                ));
            }
            let shortest = scenario
                .individuals
                .iter()
                .map(|p| p.duration)
                .fold(f64::INFINITY, f64::min);
            if self.epsilon * SMOOTHING_DURATION_RATIO > shortest {
                return bad(format!(
                    "smoothing epsilon {} h is not small against the shortest stay ({shortest} h)",
                    self.epsilon
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Exit,
    SurfaceClean,
    HandWash,
    Entry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Surface or individual id.
    pub target: String,
    /// Index of the surface or individual.
    pub index: usize,
}

/// All discrete events of a scenario, in application order: by time, then
/// exits, surface cleanings, hand washes, entries, then by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTimeline {
    pub events: Vec<Event>,
}

impl EventTimeline {
    pub fn new(scenario: &Scenario) -> Self {
        let mut events = Vec::new();
        let t_end = scenario.setting.observation_end;
        let discrete_times = |policy: &Option<crate::scenario::CleaningPolicy>| match policy {
            Some(p) if p.mode == CleaningMode::Discrete => p.event_times.clone(),
            _ => Vec::new(),
        };
        for (j, p) in scenario.individuals.iter().enumerate() {
            let at = |time, kind| Event {
                time,
                kind,
                target: p.id.clone(),
                index: j,
            };
            events.push(at(p.entry_time, EventKind::Entry));
            if p.exit_time() <= t_end {
                events.push(at(p.exit_time(), EventKind::Exit));
            }
            for t in discrete_times(&p.hand_wash) {
                events.push(at(t, EventKind::HandWash));
            }
        }
        for (i, s) in scenario.surfaces.iter().enumerate() {
            for t in discrete_times(&s.cleaning) {
                events.push(Event {
                    time: t,
                    kind: EventKind::SurfaceClean,
                    target: s.id.clone(),
                    index: i,
                });
            }
        }
        events.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then(a.kind.cmp(&b.kind))
                .then_with(|| a.target.cmp(&b.target))
        });
        EventTimeline { events }
    }

    pub fn cleanings(&self) -> impl Iterator<Item = &Event> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::SurfaceClean | EventKind::HandWash))
    }
}

/// One event as applied during integration. In exact-jump mode the window
/// is the single instant of the event and `pre`/`post` bracket its jump; in
/// smoothed mode they are the states at the edges of the ramp or pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub event: Event,
    /// False for a hand wash of someone not present at the time.
    pub applied: bool,
    pub window: (f64, f64),
    pub pre: SystemState,
    pub post: SystemState,
}

/// `S / λ`: air load at which aerosol emission by all infected individuals
/// balances ventilation, inactivation and inhalation by everyone.
pub fn steady_state_air(scenario: &Scenario) -> f64 {
    let v = scenario.setting.air_volume;
    let k_air = scenario
        .material(&scenario.air_material)
        .map(|m| LN_2 / m.half_life)
        .unwrap_or(f64::NAN);
    let source: f64 = scenario
        .individuals
        .iter()
        .filter(|p| p.infected)
        .map(kernels::aerosol_emission_rate)
        .sum();
    let inhalation: f64 = scenario
        .individuals
        .iter()
        .map(|p| p.respiration_rate)
        .sum();
    let removal = scenario.setting.ventilation_flow / v + k_air + inhalation / v;
    if source == 0.0 {
        0.0
    } else {
        source / removal
    }
}

// ---------------------------------------------------------------------------
// SDIRK4 tableau (γ = 1/4, L-stable, stiffly accurate).

const GAMMA: f64 = 0.25;
const STAGES: usize = 5;
const C: [f64; STAGES] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
const A: [[f64; STAGES]; STAGES] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
const B: [f64; STAGES] = A[4];
const B_HAT: [f64; STAGES] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const FIRST_STEP: f64 = 1e-3;

/// Linear system `y' = A(m) y + b(m)` plus quadratures `q' = C(m) y + d(m)`.
trait LinearSystem {
    fn dim(&self) -> usize;
    fn quad_dim(&self) -> usize;
    fn eval(&self, m: &Modulation, y: &[f64], dy: &mut [f64], dq: &mut [f64], sources: bool);
    /// Error scale of component `i` given its values at both step ends.
    fn scale(&self, i: usize, y0: f64, y1: f64) -> f64;
}

struct Coupled<'a> {
    dynamics: &'a Dynamics,
    rtol: f64,
    atol: f64,
}

impl LinearSystem for Coupled<'_> {
    fn dim(&self) -> usize {
        self.dynamics.layout.len()
    }

    fn quad_dim(&self) -> usize {
        self.dynamics.layout.quad_len()
    }

    fn eval(&self, m: &Modulation, y: &[f64], dy: &mut [f64], dq: &mut [f64], sources: bool) {
        self.dynamics.eval(m, y, dy, dq, sources)
    }

    fn scale(&self, _: usize, y0: f64, y1: f64) -> f64 {
        self.atol + self.rtol * y0.abs().max(y1.abs())
    }
}

/// Air alone, with the aerosol dose of every individual as quadratures.
struct AirOnly<'a> {
    dynamics: &'a Dynamics,
    respiration: Vec<f64>,
    aerosol: Vec<f64>,
    air_inactivation: f64,
    ventilation_flow: f64,
    air_volume: f64,
    reference: f64,
    rtol: f64,
    atol: f64,
}

impl LinearSystem for AirOnly<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn quad_dim(&self) -> usize {
        self.respiration.len()
    }

    fn eval(&self, m: &Modulation, y: &[f64], dy: &mut [f64], dq: &mut [f64], sources: bool) {
        let (air, v) = (y[0], self.air_volume);
        let mut d = 0.0;
        for (j, &p) in self.respiration.iter().enumerate() {
            let g = m.presence[j];
            let inhaled = if g == 0.0 {
                0.0
            } else {
                g * kernels::inhalation_rate(p, air, v)
            };
            d -= inhaled;
            dq[j] = if self.dynamics.infected[j] {
                0.0
            } else {
                inhaled
            };
        }
        d -= self.air_inactivation * air + self.ventilation_flow * air / v;
        if sources {
            for (j, &s) in self.aerosol.iter().enumerate() {
                d += m.presence[j] * s;
            }
        }
        dy[0] = d;
    }

    // Scales with the source strength, so that multiplying every shedding
    // rate by a power of two reproduces the same steps.
    fn scale(&self, _: usize, y0: f64, y1: f64) -> f64 {
        (self.rtol * y0.abs().max(y1.abs()).max(self.reference)).max(self.atol)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Counters {
    accepted: usize,
    rejected: usize,
    factorizations: usize,
}

struct Stepper<'a, S: LinearSystem> {
    sys: &'a S,
    jacobian: Option<(Modulation, DMatrix<f64>)>,
    lu: Option<(Modulation, f64, LU<f64, Dyn, Dyn>)>,
    counters: Counters,
    dq_scratch: Vec<f64>,
}

struct StepResult {
    y: Vec<f64>,
    q: Vec<f64>,
    error: f64,
}

impl<'a, S: LinearSystem> Stepper<'a, S> {
    fn new(sys: &'a S) -> Self {
        Stepper {
            sys,
            jacobian: None,
            lu: None,
            counters: Counters::default(),
            dq_scratch: vec![0.0; sys.quad_dim()],
        }
    }

    fn jacobian(&mut self, m: &Modulation) -> &DMatrix<f64> {
        let fresh = !matches!(&self.jacobian, Some((cached, _)) if cached == m);
        if fresh {
            let n = self.sys.dim();
            let mut jac = DMatrix::zeros(n, n);
            let mut e = vec![0.0; n];
            let mut col = vec![0.0; n];
            for k in 0..n {
                e[k] = 1.0;
                self.sys.eval(m, &e, &mut col, &mut self.dq_scratch, false);
                jac.column_mut(k).copy_from_slice(&col);
                e[k] = 0.0;
            }
            self.jacobian = Some((m.clone(), jac));
        }
        &self.jacobian.as_ref().unwrap().1
    }

    /// Solves `(I − hγ J(m)) x = rhs` in place.
    fn solve(&mut self, m: &Modulation, hg: f64, rhs: &mut [f64]) {
        let fresh =
            !matches!(&self.lu, Some((cached, cached_hg, _)) if cached == m && *cached_hg == hg);
        if fresh {
            let n = self.sys.dim();
            let jac = self.jacobian(m);
            let iteration = DMatrix::identity(n, n) - jac * hg;
            self.lu = Some((m.clone(), hg, iteration.lu()));
            self.counters.factorizations += 1;
        }
        let lu = &self.lu.as_ref().unwrap().2;
        let mut x = DVector::from_column_slice(rhs);
        lu.solve_mut(&mut x);
        rhs.copy_from_slice(x.as_slice());
    }

    fn step(&mut self, coeffs: &Coefficients, t: f64, h: f64, y: &[f64], q: &[f64]) -> StepResult {
        let n = self.sys.dim();
        let nq = self.sys.quad_dim();
        let hg = h * GAMMA;
        let mut f = [(); STAGES].map(|_| vec![0.0; n]);
        let mut g = [(); STAGES].map(|_| vec![0.0; nq]);
        let mut z = vec![0.0; n];
        let mut fz = vec![0.0; n];
        let mut last_m = None;
        for i in 0..STAGES {
            let m = coeffs.at(t + C[i] * h);
            z.copy_from_slice(y);
            for (j, fj) in f.iter().enumerate().take(i) {
                let a = h * A[i][j];
                for (zk, fk) in z.iter_mut().zip(fj) {
                    *zk += a * fk;
                }
            }
            self.sys.eval(&m, &z, &mut fz, &mut self.dq_scratch, true);
            for v in fz.iter_mut() {
                *v *= hg;
            }
            self.solve(&m, hg, &mut fz);
            for (zk, dk) in z.iter_mut().zip(&fz) {
                *zk += dk;
            }
            let (fi, gi) = (&mut f[i], &mut g[i]);
            self.sys.eval(&m, &z, fi, gi, true);
            last_m = Some(m);
        }

        let mut y1 = y.to_vec();
        let mut q1 = q.to_vec();
        let mut err = vec![0.0; n];
        for i in 0..STAGES {
            let (b, e) = (h * B[i], h * (B[i] - B_HAT[i]));
            for k in 0..n {
                y1[k] += b * f[i][k];
                err[k] += e * f[i][k];
            }
            for k in 0..nq {
                q1[k] += b * g[i][k];
            }
        }
        self.solve(&last_m.unwrap(), hg, &mut err);
        let sum: f64 = (0..n)
            .map(|k| {
                let r = err[k] / self.sys.scale(k, y[k], y1[k]);
                r * r
            })
            .sum();
        StepResult {
            y: y1,
            q: q1,
            error: (sum / n as f64).sqrt(),
        }
    }
}

/// Coefficients over one inter-breakpoint interval.
enum Coefficients<'a> {
    Frozen(Modulation),
    Timed(&'a Dynamics),
}

impl Coefficients<'_> {
    fn at(&self, t: f64) -> Cow<'_, Modulation> {
        match self {
            Coefficients::Frozen(m) => Cow::Borrowed(m),
            Coefficients::Timed(d) => Cow::Owned(d.modulation(t)),
        }
    }
}

/// Breakpoints and per-interval step limits shared by both passes.
struct Plan {
    points: Vec<f64>,
    /// `max_step[k]` applies on `[points[k], points[k + 1]]`.
    max_step: Vec<f64>,
}

impl Plan {
    fn new(
        mut points: Vec<f64>,
        t_end: f64,
        windows: &[(f64, f64)],
        inside: f64,
        outside: f64,
    ) -> Self {
        points.retain(|&t| (0.0..=t_end).contains(&t));
        points.push(0.0);
        points.push(t_end);
        points.sort_by(f64::total_cmp);
        points.dedup_by(|b, a| coincide(*a, *b));
        let max_step = points
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                if windows.iter().any(|&(a, b)| a < mid && mid < b) {
                    inside
                } else {
                    outside
                }
            })
            .collect();
        Plan { points, max_step }
    }
}

/// Integrates `sys` through every interval of `plan`, calling `at_point`
/// after arriving at each breakpoint (including the first).
fn run_pass<S: LinearSystem>(
    sys: &S,
    dynamics: &Dynamics,
    plan: &Plan,
    y: &mut Vec<f64>,
    q: &mut Vec<f64>,
    counters: &mut Counters,
    mut at_point: impl FnMut(usize, &mut Vec<f64>, &mut Vec<f64>) -> Result<(), IntegrationError>,
) -> Result<(), IntegrationError> {
    let mut stepper = Stepper::new(sys);
    let mut h_next = FIRST_STEP;
    at_point(0, y, q)?;
    for k in 0..plan.points.len() - 1 {
        let (a, b) = (plan.points[k], plan.points[k + 1]);
        let coeffs = match dynamics.mode() {
            EventMode::ExactJump => Coefficients::Frozen(dynamics.modulation(0.5 * (a + b))),
            EventMode::Smoothed => Coefficients::Timed(dynamics),
        };
        let h_max = plan.max_step[k];
        let mut t = a;
        let mut h = h_next.min(h_max);
        while t < b {
            let remaining = b - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let h_try = if last { remaining } else { h };
            if h_try <= 1e-14 * b.abs().max(1.0) {
                return Err(IntegrationError::StepUnderflow { t, h: h_try });
            }
            let res = stepper.step(&coeffs, t, h_try, y, q);
            if !res.error.is_finite() || res.y.iter().any(|v| !v.is_finite()) {
                if h_try < 1e-10 {
                    return Err(IntegrationError::NonFinite { t });
                }
                h = h_try * MIN_FACTOR;
                stepper.counters.rejected += 1;
                continue;
            }
            let factor = if res.error == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * res.error.powf(-0.25)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if res.error <= 1.0 {
                stepper.counters.accepted += 1;
                *y = res.y;
                *q = res.q;
                t = if last { b } else { t + h_try };
                // A step shortened to land on `b` does not limit the next one.
                let base = if last { h.max(h_try) } else { h_try };
                h = (base * factor).min(h_max);
                h_next = base * factor;
            } else {
                stepper.counters.rejected += 1;
                h = h_try * factor.min(1.0);
            }
        }
        at_point(k + 1, y, q)?;
    }
    counters.accepted += stepper.counters.accepted;
    counters.rejected += stepper.counters.rejected;
    counters.factorizations += stepper.counters.factorizations;
    Ok(())
}

/// Instants closer than this (relative, floored at 1 h) are one breakpoint.
fn coincide(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn output_grid(t_end: f64, step: f64) -> Vec<f64> {
    let n = (t_end / step * (1.0 + 1e-12)).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if let Some(last) = grid.last_mut() {
        if (t_end - *last).abs() <= 1e-9 * t_end {
            *last = t_end;
        }
    }
    if *grid.last().unwrap() < t_end {
        grid.push(t_end);
    }
    grid
}

fn smoothing_windows(timeline: &EventTimeline, eps: f64, t_end: f64) -> Vec<(f64, f64)> {
    timeline
        .events
        .iter()
        .map(|e| match e.kind {
            EventKind::Entry | EventKind::Exit => (e.time, e.time + eps),
            EventKind::SurfaceClean | EventKind::HandWash => (e.time - eps, e.time + eps),
        })
        .map(|(a, b)| (a.max(0.0), b.min(t_end)))
        .collect()
}

fn compartment_name(dynamics: &Dynamics, scenario: &Scenario, k: usize) -> String {
    let lay = &dynamics.layout;
    let (ns, ni) = (lay.n_surfaces, lay.n_individuals);
    if k < ns {
        scenario.surfaces[k].id.clone()
    } else if k < ns + ni {
        format!("hand:{}", scenario.individuals[k - ns].id)
    } else if k < ns + 2 * ni {
        format!("mucosa:{}", scenario.individuals[k - ns - ni].id)
    } else {
        "air".into()
    }
}

pub fn scenario_hash(scenario: &Scenario) -> String {
    hex::encode(Sha256::digest(to_toml_string(scenario).as_bytes()))
}

/// Solves the scenario over `[0, observation_end]`.
pub fn integrate(
    scenario: &Scenario,
    config: &IntegrationConfig,
) -> Result<SimulationResult, IntegrationError> {
    config.check(scenario)?;
    let t_end = scenario.setting.observation_end;
    let dynamics = Dynamics::new(scenario, config.mode, config.epsilon)?;
    let layout = dynamics.layout;
    let timeline = EventTimeline::new(scenario);
    let grid = output_grid(t_end, config.grid_step);
    let outside = config.max_step.unwrap_or(f64::INFINITY);
    let eps = config.epsilon;

    let (plan, windows) = match config.mode {
        EventMode::ExactJump => {
            let mut points = grid.clone();
            points.extend(timeline.events.iter().map(|e| e.time));
            (Plan::new(points, t_end, &[], outside, outside), Vec::new())
        }
        EventMode::Smoothed => {
            let windows = smoothing_windows(&timeline, eps, t_end);
            let mut points = grid.clone();
            for e in &timeline.events {
                points.extend([e.time - eps, e.time, e.time + eps]);
            }
            let inside = (eps / 5.0).min(outside);
            (Plan::new(points, t_end, &windows, inside, outside), windows)
        }
    };

    let initial = crate::dynamics::initial_state(scenario, &dynamics.ctx);
    let (mut y, mut q) = initial.to_vectors();
    let mut counters = Counters::default();
    let mut states = Vec::with_capacity(grid.len());
    let mut records: Vec<EventRecord> = Vec::new();
    let mut pending: Vec<(usize, SystemState)> = Vec::new();
    let mut grid_iter = 0;

    let coupled = Coupled {
        dynamics: &dynamics,
        rtol: config.rtol,
        atol: config.atol,
    };
    let events = &timeline.events;
    run_pass(
        &coupled,
        &dynamics,
        &plan,
        &mut y,
        &mut q,
        &mut counters,
        |k, y, q| {
            let t = plan.points[k];
            let snapshot = |y: &[f64], q: &[f64]| SystemState::from_vectors(&layout, y, q);
            match config.mode {
                EventMode::ExactJump => {
                    for e in events.iter().filter(|e| coincide(e.time, t)) {
                        let pre = snapshot(y, q);
                        let removed = match e.kind {
                            EventKind::SurfaceClean => dynamics
                                .surface_policy(e.index)
                                .map(|p| dynamics.apply_jump(y, Compartment::Surface(e.index), p)),
                            EventKind::HandWash => {
                                let p = &scenario.individuals[e.index];
                                let present = p.entry_time < e.time && e.time < p.exit_time();
                                dynamics
                                    .hand_policy(e.index)
                                    .filter(|_| present)
                                    .map(|pol| {
                                        dynamics.apply_jump(y, Compartment::Hand(e.index), pol)
                                    })
                            }
                            EventKind::Entry | EventKind::Exit => Some(0.0),
                        };
                        let applied = removed.is_some();
                        q[layout.cleaned_index()] += removed.unwrap_or(0.0);
                        let post = snapshot(y, q);
                        records.push(EventRecord {
                            event: e.clone(),
                            applied,
                            window: (t, t),
                            pre,
                            post,
                        });
                    }
                }
                EventMode::Smoothed => {
                    for (idx, &(a, _)) in windows.iter().enumerate() {
                        if coincide(a, t) {
                            pending.push((idx, snapshot(y, q)));
                        }
                    }
                    let mut still = Vec::new();
                    for (idx, pre) in pending.drain(..) {
                        let (a, b) = windows[idx];
                        if coincide(b, t) {
                            let e = &events[idx];
                            let applied = match e.kind {
                                EventKind::HandWash => {
                                    crate::dynamics::indicator(&dynamics.indicator, e.index, e.time)
                                        > 0.0
                                }
                                EventKind::SurfaceClean => {
                                    dynamics.surface_policy(e.index).is_some()
                                }
                                _ => true,
                            };
                            records.push(EventRecord {
                                event: e.clone(),
                                applied,
                                window: (a, b),
                                pre,
                                post: snapshot(y, q),
                            });
                        } else {
                            still.push((idx, pre));
                        }
                    }
                    pending = still;
                }
            }
            if grid_iter < grid.len() && coincide(grid[grid_iter], t) {
                grid_iter += 1;
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(IntegrationError::NonFinite { t });
                }
                if let Some((i, &v)) = y.iter().enumerate().find(|(_, &v)| v < -config.atol) {
                    return Err(IntegrationError::NegativeLoad {
                        t,
                        compartment: compartment_name(&dynamics, scenario, i),
                        value: v,
                    });
                }
                states.push(snapshot(y, q));
            }
            Ok(())
        },
    )?;
    records.sort_by(|a, b| {
        a.window
            .0
            .total_cmp(&b.window.0)
            .then(a.event.kind.cmp(&b.event.kind))
            .then_with(|| a.event.target.cmp(&b.event.target))
    });

    let partitioned = dynamics.ctx.air_decoupled();
    if partitioned {
        integrate_air(
            scenario,
            config,
            &dynamics,
            &grid,
            &plan,
            &mut states,
            &mut counters,
        )?;
    }

    Ok(SimulationResult {
        times: grid,
        states,
        events: records,
        initial_state: initial,
        surface_ids: scenario.surfaces.iter().map(|s| s.id.clone()).collect(),
        individual_ids: scenario.individuals.iter().map(|p| p.id.clone()).collect(),
        infected: dynamics.infected.clone(),
        dose_response: scenario
            .individuals
            .iter()
            .map(|p| p.dose_response)
            .collect(),
        steady_state_air: steady_state_air(scenario),
        metadata: RunMetadata {
            scenario_name: scenario.name.clone(),
            scenario_hash: scenario_hash(scenario),
            mode: config.mode,
            epsilon: config.epsilon,
            rtol: config.rtol,
            atol: config.atol,
            grid_step: config.grid_step,
            observation_end: t_end,
            partitioned,
        },
        stats: SolverStats {
            accepted_steps: counters.accepted,
            rejected_steps: counters.rejected,
            factorizations: counters.factorizations,
        },
    })
}

/// Re-integrates air and aerosol doses on their own and overwrites them in
/// the grid states.
fn integrate_air(
    scenario: &Scenario,
    config: &IntegrationConfig,
    dynamics: &Dynamics,
    grid: &[f64],
    full_plan: &Plan,
    states: &mut [SystemState],
    counters: &mut Counters,
) -> Result<(), IntegrationError> {
    let people = &scenario.individuals;
    let sys = AirOnly {
        dynamics,
        respiration: people.iter().map(|p| p.respiration_rate).collect(),
        aerosol: people.iter().map(kernels::aerosol_emission_rate).collect(),
        air_inactivation: dynamics.ctx.air_inactivation,
        ventilation_flow: scenario.setting.ventilation_flow,
        air_volume: scenario.setting.air_volume,
        reference: steady_state_air(scenario),
        rtol: config.rtol,
        atol: config.atol,
    };
    // Only presence changes matter for air; cleaning times are left out so
    // the air solution does not depend on the cleaning schedule.
    let mut points = grid.to_vec();
    let eps = config.epsilon;
    for p in people {
        for t in [p.entry_time, p.exit_time()] {
            points.push(t);
            if config.mode == EventMode::Smoothed {
                points.push(t + eps);
            }
        }
    }
    let t_end = scenario.setting.observation_end;
    let windows: Vec<(f64, f64)> = match config.mode {
        EventMode::ExactJump => Vec::new(),
        EventMode::Smoothed => people
            .iter()
            .flat_map(|p| {
                [
                    (p.entry_time, p.entry_time + eps),
                    (p.exit_time(), p.exit_time() + eps),
                ]
            })
            .map(|(a, b)| (a, b.min(t_end)))
            .collect(),
    };
    let outside = config.max_step.unwrap_or(f64::INFINITY);
    let inside = match full_plan.max_step.iter().copied().reduce(f64::min) {
        Some(h) if config.mode == EventMode::Smoothed => h.min(eps / 5.0),
        _ => outside,
    };
    let plan = Plan::new(points, t_end, &windows, inside, outside);

    let mut y = vec![0.0];
    let mut q = vec![0.0; people.len()];
    let mut next = 0;
    run_pass(
        &sys,
        dynamics,
        &plan,
        &mut y,
        &mut q,
        counters,
        |k, y, q| {
            let t = plan.points[k];
            if next < grid.len() && coincide(grid[next], t) {
                if !y[0].is_finite() {
                    return Err(IntegrationError::NonFinite { t });
                }
                if y[0] < -config.atol {
                    return Err(IntegrationError::NegativeLoad {
                        t,
                        compartment: "air".into(),
                        value: y[0],
                    });
                }
                let s = &mut states[next];
                s.air_load = y[0];
                for (j, d) in s.doses.iter_mut().enumerate() {
                    d.aerosol = q[j];
                }
                next += 1;
            }
            Ok(())
        },
    )?;
    Ok(())
}
