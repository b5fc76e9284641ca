//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion reports one line, even when an earlier one fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use common::{decay_scenario, emitter_scenario, rel, toy, LN2};
use fomes_core::dynamics::Pathway;
use fomes_core::exposure::{mass_balance_report, pathway_shares};
use fomes_core::integrator::{steady_state_air, EventKind};
use fomes_core::scenario::{small_office, EventMode, Scenario, SmallOfficeParams};
use fomes_core::sweep::{run_sweep, set_cleaning_events, SweepSpec};
use fomes_core::{builtin_fixture, integrate, IntegrationConfig, SimulationResult};

type Checks = Vec<(String, bool)>;

struct Report {
    checks: Checks,
}

impl Report {
    fn new() -> Self {
        Report { checks: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.checks.push((what.into(), ok));
    }

    fn within(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        self.check(
            (lo..=hi).contains(&value),
            format!("{name} = {value:.6} in [{lo}, {hi}]"),
        );
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

fn run(s: &Scenario) -> SimulationResult {
    integrate(s, &IntegrationConfig::default()).expect("integration")
}

fn run_mode(s: &Scenario, mode: EventMode) -> SimulationResult {
    let config = IntegrationConfig {
        mode,
        ..IntegrationConfig::default()
    };
    integrate(s, &config).expect("integration")
}

fn office(params: SmallOfficeParams, cleanings: usize) -> SimulationResult {
    let mut s = small_office(&params);
    set_cleaning_events(&mut s, cleanings).unwrap();
    run(&s)
}

const SUSCEPTIBLE: usize = 1;

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn criterion_1(r: &mut Report) {
    let (half_life, v0) = (5.63, 2.5e5);
    let (res, took) = timed(|| run(&decay_scenario(v0, half_life)));
    let worst = res
        .times
        .iter()
        .zip(&res.states)
        .map(|(&t, s)| rel(s.surface_loads[0], v0 * (-LN2 / half_life * t).exp()))
        .fold(0.0, f64::max);
    r.check(
        worst <= 1e-6,
        format!("pure decay max rel err {worst:.2e} <= 1e-6"),
    );
    r.check(
        took.as_secs_f64() < 1.0,
        format!("pure decay ran in {took:?}"),
    );

    let (alpha, volume, flow) = (4e6, 30.0, 45.0);
    let s = emitter_scenario(alpha, volume, flow, 6.0, 6.0);
    let source = 0.75 * alpha;
    let lambda = flow / volume + LN2 / 1.1 + 0.5 / volume;
    let (res, took) = timed(|| run(&s));
    let worst = res
        .times
        .iter()
        .zip(&res.states)
        .skip(1)
        .map(|(&t, st)| rel(st.air_load, source / lambda * -(-lambda * t).exp_m1()))
        .fold(0.0, f64::max);
    r.check(
        worst <= 1e-6,
        format!("constant-source air max rel err {worst:.2e} <= 1e-6"),
    );
    r.check(
        took.as_secs_f64() < 1.0,
        format!("constant-source air ran in {took:?}"),
    );

    let cs1 = builtin_fixture("case-study-1").unwrap();
    let ss = steady_state_air(&cs1);
    r.within(
        "case-study-1 steady-state air / 3.4e6",
        ss / 3.4e6,
        0.98,
        1.02,
    );
}

fn jump_checks(r: &mut Report, label: &str, s: &Scenario) {
    let exact = run_mode(s, EventMode::ExactJump);
    let smooth = run_mode(s, EventMode::Smoothed);
    let mut worst_exact = 0.0f64;
    let mut worst_smooth = 0.0f64;
    let mut count = 0;
    for (e, sm) in exact.events.iter().zip(&smooth.events) {
        let (load, lrv): (fn(&fomes_core::dynamics::SystemState, usize) -> f64, f64) =
            match e.event.kind {
                EventKind::SurfaceClean => (
                    |st, i| st.surface_loads[i],
                    s.surfaces[e.event.index].cleaning.as_ref().unwrap().lrv,
                ),
                EventKind::HandWash if e.applied => (
                    |st, j| st.hand_loads[j],
                    s.individuals[e.event.index].hand_wash.as_ref().unwrap().lrv,
                ),
                _ => continue,
            };
        let i = e.event.index;
        let pre = load(&e.pre, i);
        if pre == 0.0 {
            continue;
        }
        count += 1;
        worst_exact = worst_exact.max(rel(load(&e.post, i), pre * 10f64.powf(-lrv)));
        // First output point after the smoothing window.
        let k = exact.times.partition_point(|&t| t <= sm.window.1);
        worst_smooth = worst_smooth.max(rel(load(&exact.states[k], i), load(&smooth.states[k], i)));
    }
    r.check(
        count > 0,
        format!("{label}: {count} cleanings with nonzero pre-load"),
    );
    r.check(
        worst_exact <= 4.0 * f64::EPSILON,
        format!("{label}: exact jump rel err {worst_exact:.2e} <= 4 ulp"),
    );
    r.check(worst_smooth <= 0.01, format!("{label}: smoothed vs exact cleaned load after each window, rel diff {worst_smooth:.2e} <= 1%"));

    let worst_dose = exact
        .susceptible_indices()
        .map(|j| rel(exact.final_doses(j).total(), smooth.final_doses(j).total()))
        .fold(0.0, f64::max);
    r.check(
        worst_dose <= 0.01,
        format!("{label}: smoothed vs exact final dose rel diff {worst_dose:.2e} <= 1%"),
    );
}

fn criterion_2(r: &mut Report) {
    jump_checks(r, "toy", &toy());
    let mut cs1 = small_office(&SmallOfficeParams::case_study_1());
    set_cleaning_events(&mut cs1, 2).unwrap();
    jump_checks(r, "case-study-1 cleaned at 2 h and 4 h", &cs1);
}

fn criterion_3(r: &mut Report) {
    let res = run(&builtin_fixture("case-study-1").unwrap());
    let mb = mass_balance_report(&res);
    r.check(
        mb.relative_residual <= 1e-6,
        format!("relative residual {:.2e} <= 1e-6", mb.relative_residual),
    );
}

fn criterion_4(r: &mut Report) {
    let base = office(SmallOfficeParams::case_study_1(), 0);
    let k = base.time_index(4.0).unwrap();
    let loads = &base.states[k].surface_loads;
    let (door, doc, desk) = (
        loads[base.surface_index("door-handle").unwrap()],
        loads[base.surface_index("document").unwrap()],
        loads[base.surface_index("desk").unwrap()],
    );
    r.check(
        desk > doc && desk > door,
        format!("desk highest at 4 h ({desk:.3e} vs {doc:.3e}, {door:.3e})"),
    );
    r.within("desk/document at 4 h", desk / doc, 2.5 * 0.8, 2.5 * 1.2);
    r.within(
        "desk/door-handle at 4 h",
        desk / door,
        65.0 * 0.8,
        65.0 * 1.2,
    );

    let e0 = base.final_doses(SUSCEPTIBLE).total();
    let e1 = office(SmallOfficeParams::case_study_1(), 1)
        .final_doses(SUSCEPTIBLE)
        .total();
    let e2 = office(SmallOfficeParams::case_study_1(), 2)
        .final_doses(SUSCEPTIBLE)
        .total();
    r.within(
        "one cleaning reduction %",
        100.0 * (1.0 - e1 / e0),
        29.0,
        39.0,
    );
    r.within(
        "two cleanings reduction %",
        100.0 * (1.0 - e2 / e0),
        44.0,
        54.0,
    );

    let min_share = base
        .times
        .iter()
        .filter(|&&t| t >= 0.25)
        .map(|&t| pathway_shares(&base, SUSCEPTIBLE, t).unwrap().fomite)
        .fold(1.0, f64::min);
    r.check(
        min_share > 0.5,
        format!("min fomite share over [0.25, 8] h = {min_share:.3} > 0.5"),
    );
}

fn criterion_5(r: &mut Report) {
    let cs1 = office(SmallOfficeParams::case_study_1(), 0);
    let base = office(SmallOfficeParams::case_study_2(), 0);
    let e0 = base.final_doses(SUSCEPTIBLE).total();
    r.within(
        "case-study-1 / case-study-2 exposure",
        cs1.final_doses(SUSCEPTIBLE).total() / e0,
        7.0 * 0.75,
        7.0 * 1.25,
    );

    let k = base.time_index(4.0).unwrap();
    let loads = &base.states[k].surface_loads;
    let own = loads[base.surface_index("desk-1").unwrap()];
    let other = loads[base.surface_index("desk-2").unwrap()];
    r.within(
        "infected desk / susceptible desk at 4 h",
        other / own,
        40.0 * 0.7,
        f64::INFINITY,
    );

    let e1 = office(SmallOfficeParams::case_study_2(), 1)
        .final_doses(SUSCEPTIBLE)
        .total();
    let e2 = office(SmallOfficeParams::case_study_2(), 2)
        .final_doses(SUSCEPTIBLE)
        .total();
    r.within(
        "one cleaning reduction %",
        100.0 * (1.0 - e1 / e0),
        14.0,
        24.0,
    );
    r.within(
        "two cleanings reduction %",
        100.0 * (1.0 - e2 / e0),
        25.0,
        35.0,
    );

    let aerosol_leads = base
        .times
        .iter()
        .filter(|&&t| (0.25..=2.0).contains(&t))
        .any(|&t| {
            let s = pathway_shares(&base, SUSCEPTIBLE, t).unwrap();
            s.aerosol > s.fomite
        });
    r.check(
        aerosol_leads,
        "aerosol share exceeds fomite share somewhere in [0.25, 2] h",
    );

    let d = rel(
        cs1.final_doses(SUSCEPTIBLE).get(Pathway::Aerosol),
        base.final_doses(SUSCEPTIBLE).get(Pathway::Aerosol),
    );
    r.check(
        d <= 1e-6,
        format!("aerosol dose rel diff vs case-study-1 {d:.2e} <= 1e-6"),
    );
}

fn criterion_6(r: &mut Report) {
    let s = builtin_fixture("case-study-3").unwrap();
    let (res, took) = timed(|| run(&s));
    r.check(
        took.as_secs_f64() < 10.0,
        format!("39-person 24 h run in {took:?} < 10 s"),
    );

    let t_end = *res.times.last().unwrap();
    let share = |k: usize| {
        let j = res.individual_index(&format!("student-{k}")).unwrap();
        pathway_shares(&res, j, t_end).unwrap().fomite
    };
    for k in [2, 3] {
        r.within(
            &format!("student-{k} fomite share %"),
            100.0 * share(k),
            4.0,
            10.0,
        );
    }
    let worst_far = (4..=39).map(share).fold(0.0, f64::max);
    r.check(
        worst_far < 0.01,
        format!("max fomite share in sets 2 and 3 = {worst_far:.2e} < 1%"),
    );

    let public = [
        "cabinet-handle-1",
        "cabinet-handle-2",
        "cabinet-handle-3",
        "printer",
        "water-dispenser",
        "door-handle",
    ];
    let conc: Vec<Vec<f64>> = public
        .iter()
        .map(|id| {
            let i = res.surface_index(id).unwrap();
            let area = s.surfaces[i].area;
            res.surface_series(i).iter().map(|v| v / area).collect()
        })
        .collect();
    let leads = (1..res.times.len()).all(|k| (1..public.len()).all(|p| conc[0][k] > conc[p][k]));
    r.check(
        leads,
        "cabinet-handle-1 has the highest public-surface concentration at every t > 0",
    );

    let peak = |p: usize| conc[p].iter().cloned().fold(0.0, f64::max);
    let quiet = peak(1).max(peak(2)) / peak(0);
    r.check(
        quiet < 1e-2,
        format!("cabinet handles 2-3 peak / cabinet handle 1 peak = {quiet:.2e} < 1%"),
    );

    let k4 = res.time_index(4.0).unwrap();
    let falling = (0..public.len())
        .filter(|&p| p != 1 && p != 2)
        .all(|p| conc[p][k4..].windows(2).all(|w| w[1] < w[0]));
    r.check(
        falling,
        "cabinet-handle-1, printer, water-dispenser, door-handle strictly decrease after 4 h",
    );
}

fn exposure_grid(fixture: &str, cleanings: &[usize], ach: &[f64]) -> Vec<Vec<f64>> {
    let base = builtin_fixture(fixture).unwrap();
    let list = |xs: Vec<String>| xs.join(", ");
    let spec = SweepSpec::parse(&format!(
        "target = \"susceptible\"\nmetric = \"final_total_exposure\"\n\
         [axis1]\npath = \"cleaning_events\"\nvalues = [{}]\n\
         [axis2]\npath = \"setting.air_changes_per_hour\"\nvalues = [{}]\n",
        list(cleanings.iter().map(|n| format!("{n}")).collect()),
        list(ach.iter().map(|a| format!("{a:?}")).collect()),
    ))
    .unwrap();
    let cells = run_sweep(&base, &spec, &IntegrationConfig::default(), None).unwrap();
    cells
        .chunks(ach.len())
        .map(|row| row.iter().map(|c| c.metric).collect())
        .collect()
}

fn criterion_7(r: &mut Report) {
    let cleanings: Vec<usize> = (0..=8).collect();
    let ach = [0.25, 0.5, 1.0, 2.0, 4.0];
    for fixture in ["case-study-1", "case-study-2"] {
        let grid = exposure_grid(fixture, &cleanings, &ach);
        let monotone = (0..ach.len()).all(|c| grid.windows(2).all(|w| w[1][c] <= w[0][c]));
        r.check(
            monotone,
            format!("{fixture}: exposure nonincreasing in cleaning count at every ACH"),
        );
        if fixture == "case-study-1" {
            let spread: Vec<f64> = grid
                .iter()
                .map(|row| {
                    let hi = row[2..].iter().cloned().fold(f64::MIN, f64::max);
                    let lo = row[2..].iter().cloned().fold(f64::MAX, f64::min);
                    100.0 * (hi / lo - 1.0)
                })
                .collect();
            let shown: Vec<String> = spread.iter().map(|x| format!("{x:.1}")).collect();
            r.check(
                spread[0] < 10.0,
                format!("{fixture}: exposure spread over ACH 1..4 without cleaning = {:.2}% < 10% (by cleaning count: {})", spread[0], shown.join(" ")),
            );
        } else {
            let change = |c: usize, n: usize| 1.0 - grid[2 * n][c] / grid[n][c];
            for n in [1, 2, 4] {
                let (low, high) = (change(0, n), change(4, n));
                r.check(
                    low < high,
                    format!(
                        "{fixture}: {n} -> {} cleanings cuts {:.1}% at 0.25 ACH vs {:.1}% at 4 ACH",
                        2 * n,
                        100.0 * low,
                        100.0 * high
                    ),
                );
            }
        }
    }
}

fn criterion_8(r: &mut Report) {
    let s = toy();
    let base = run(&s);
    let ann = s.individual_index("ann").unwrap();
    let cat = s.individual_index("cat").unwrap();

    let absent: Vec<_> = base
        .times
        .iter()
        .zip(&base.states)
        .filter(|(&t, _)| t < 1.0)
        .map(|(_, st)| st.doses[cat].total())
        .collect();
    r.check(
        absent.iter().all(|&d| d == 0.0),
        "gating: no dose before entry",
    );
    let k_exit = base.time_index(5.5).unwrap();
    let frozen_after_exit = base.states[k_exit..]
        .iter()
        .all(|st| st.doses[cat] == base.states[k_exit].doses[cat]);
    r.check(frozen_after_exit, "gating: doses constant after exit");

    let v0 = s.individuals[ann].initial_mucosa_load;
    r.check(
        base.states.iter().all(|st| st.mucosa_loads[ann] == v0),
        "freeze: infected mucosa constant",
    );

    let monotone = base.states.windows(2).all(|w| {
        w[0].doses
            .iter()
            .zip(&w[1].doses)
            .all(|(a, b)| Pathway::ALL.iter().all(|&p| b.get(p) >= a.get(p)))
    });
    r.check(monotone, "monotone doses on every pathway");

    let mut healthy = s.clone();
    healthy.individuals[ann].infected = false;
    healthy.individuals[ann].shedding_rate = 0.0;
    healthy.individuals[ann].initial_mucosa_load = 0.0;
    let null = run(&healthy);
    let all_zero = null.states.iter().all(|st| {
        st.air_load == 0.0
            && st
                .surface_loads
                .iter()
                .chain(&st.hand_loads)
                .chain(&st.mucosa_loads)
                .all(|&v| v == 0.0)
            && st.doses.iter().all(|d| d.total() == 0.0)
    });
    r.check(all_zero, "null source: everything stays zero");

    let mut doubled = s.clone();
    doubled.individuals[ann].shedding_rate *= 2.0;
    doubled.individuals[ann].initial_mucosa_load *= 2.0;
    let twice = run(&doubled);
    let worst = base
        .states
        .iter()
        .zip(&twice.states)
        .flat_map(|(a, b)| {
            a.doses
                .iter()
                .zip(&b.doses)
                .map(|(x, y)| rel(2.0 * x.total(), y.total()))
        })
        .fold(0.0, f64::max);
    r.check(
        worst <= 1e-6,
        format!("linearity: doses double with the source (rel err {worst:.2e})"),
    );

    let smooth = run_mode(&s, EventMode::Smoothed);
    let worst = base
        .susceptible_indices()
        .map(|j| rel(base.final_doses(j).total(), smooth.final_doses(j).total()))
        .fold(0.0, f64::max);
    r.check(
        worst <= 0.01,
        format!("cross-mode final dose rel diff {worst:.2e} <= 1%"),
    );

    let again = run(&s);
    r.check(
        again.states == base.states && again.times == base.times,
        "determinism: identical reruns",
    );
}

type Criterion = (&'static str, fn(&mut Report));

fn main() {
    let criteria: [Criterion; 8] = [
        ("analytic oracles", criterion_1),
        ("jump exactness", criterion_2),
        ("conservation", criterion_3),
        ("case study 1 regression", criterion_4),
        ("case study 2 regression", criterion_5),
        ("case study 3 regression", criterion_6),
        ("heatmap properties", criterion_7),
        ("property suite", criterion_8),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let mut report = Report::new();
        f(&mut report);
        let verdict = if report.passed() { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict}: {name}", n + 1);
        for (what, ok) in &report.checks {
            println!("    [{}] {what}", if *ok { "ok" } else { "FAIL" });
        }
        if !report.passed() {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
