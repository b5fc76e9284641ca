use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::model::{CleaningMode, CleaningPolicy, EventMode, ObjectRef, Scenario};

/// Minimum ratio between the shortest stay and the smoothing width ε.
pub const SMOOTHING_DURATION_RATIO: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

/// One validation result, naming the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl Finding {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Findings(Vec<Finding>);

impl Findings {
    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Finding {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Finding {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, path: &str, x: f64) {
        if !(x.is_finite() && x > 0.0) {
            self.error(path, format!("must be finite and > 0 (got {x})"));
        }
    }

    fn nonnegative(&mut self, path: &str, x: f64) {
        if !(x.is_finite() && x >= 0.0) {
            self.error(path, format!("must be finite and >= 0 (got {x})"));
        }
    }

    fn unit_interval(&mut self, path: &str, x: f64) {
        if !(0.0..=1.0).contains(&x) {
            self.error(path, format!("must lie in [0, 1] (got {x})"));
        }
    }

    fn identifier(&mut self, path: &str, id: &str) {
        if id.is_empty() || id.contains([':', '.', ',']) || id.contains("->") {
            self.error(
                path,
                format!("identifier `{id}` must be non-empty and free of `:`, `.`, `,` and `->`"),
            );
        }
    }
}

/// Checks every scenario invariant. Errors make the scenario unusable;
/// warnings flag suspicious but admissible parameter combinations.
pub fn validate(scenario: &Scenario) -> Vec<Finding> {
    let mut f = Findings::default();
    let t_end = scenario.setting.observation_end;

    f.positive("setting.air_volume", scenario.setting.air_volume);
    f.nonnegative(
        "setting.ventilation_flow",
        scenario.setting.ventilation_flow,
    );
    f.positive("setting.observation_end", t_end);

    let mut names = BTreeSet::new();
    for (k, m) in scenario.materials.iter().enumerate() {
        f.positive(&format!("materials[{k}].half_life"), m.half_life);
        if !names.insert(m.name.as_str()) {
            f.error(
                format!("materials[{k}].name"),
                format!("duplicate material `{}`", m.name),
            );
        }
    }
    for (field, name) in [
        ("hand_material", &scenario.hand_material),
        ("mucosa_material", &scenario.mucosa_material),
        ("air_material", &scenario.air_material),
    ] {
        if scenario.material(name).is_none() {
            f.error(field, format!("unknown material `{name}`"));
        }
    }

    let mut surface_ids = BTreeSet::new();
    for (k, s) in scenario.surfaces.iter().enumerate() {
        let p = format!("surfaces[{k}]");
        f.identifier(&format!("{p}.id"), &s.id);
        if !surface_ids.insert(s.id.as_str()) {
            f.error(
                format!("{p}.id"),
                format!("duplicate surface id `{}`", s.id),
            );
        }
        f.positive(&format!("{p}.area"), s.area);
        if scenario.material(&s.material).is_none() {
            f.error(
                format!("{p}.material"),
                format!("unknown material `{}`", s.material),
            );
        }
        f.unit_interval(&format!("{p}.ld_capture_fraction"), s.ld_capture_fraction);
        if let Some(policy) = &s.cleaning {
            check_policy(&mut f, &format!("{p}.cleaning"), policy, t_end);
        }
    }

    if scenario.individuals.is_empty() {
        f.error("individuals", "at least one individual is required");
    }
    let mut person_ids = BTreeSet::new();
    for (k, p) in scenario.individuals.iter().enumerate() {
        let path = format!("individuals[{k}]");
        f.identifier(&format!("{path}.id"), &p.id);
        if surface_ids.contains(p.id.as_str()) || !person_ids.insert(p.id.as_str()) {
            f.error(format!("{path}.id"), format!("duplicate id `{}`", p.id));
        }
        f.nonnegative(&format!("{path}.entry_time"), p.entry_time);
        f.positive(&format!("{path}.duration"), p.duration);
        if p.exit_time() > t_end * (1.0 + 1e-12) {
            f.error(
                format!("{path}.duration"),
                format!(
                    "entry_time + duration = {} exceeds observation_end = {t_end}",
                    p.exit_time()
                ),
            );
        }
        f.positive(&format!("{path}.hand_area"), p.hand_area);
        f.positive(&format!("{path}.mucosa_area"), p.mucosa_area);
        f.nonnegative(&format!("{path}.respiration_rate"), p.respiration_rate);
        f.nonnegative(&format!("{path}.shedding_rate"), p.shedding_rate);
        f.unit_interval(
            &format!("{path}.fraction_large_droplets"),
            p.fraction_large_droplets,
        );
        f.unit_interval(
            &format!("{path}.mask_capture_efficacy"),
            p.mask_capture_efficacy,
        );
        f.unit_interval(
            &format!("{path}.mask_aerosol_filtration"),
            p.mask_aerosol_filtration,
        );
        f.nonnegative(
            &format!("{path}.initial_mucosa_load"),
            p.initial_mucosa_load,
        );
        f.nonnegative(
            &format!("{path}.face_touch_frequency"),
            p.face_touch_frequency,
        );
        f.nonnegative(&format!("{path}.face_contact_area"), p.face_contact_area);
        f.unit_interval(
            &format!("{path}.hand_to_mucosa_fraction"),
            p.hand_to_mucosa_fraction,
        );
        f.unit_interval(
            &format!("{path}.mucosa_to_hand_fraction"),
            p.mucosa_to_hand_fraction,
        );
        f.positive(&format!("{path}.dose_response"), p.dose_response);
        if p.face_contact_area > p.hand_area.min(p.mucosa_area) {
            f.error(
                format!("{path}.face_contact_area"),
                "contact area exceeds the hand or mucosa area",
            );
        }
        if p.face_touch_frequency > 0.0 && p.face_contact_area <= 0.0 {
            f.error(
                format!("{path}.face_contact_area"),
                "face touching requires a positive contact area",
            );
        }
        if !p.infected {
            if p.shedding_rate != 0.0 {
                f.error(
                    format!("{path}.shedding_rate"),
                    "susceptible individuals do not shed virus",
                );
            }
            if p.initial_mucosa_load != 0.0 {
                f.error(
                    format!("{path}.initial_mucosa_load"),
                    "susceptible individuals start virus-free",
                );
            }
        }
        if let Some(policy) = &p.hand_wash {
            check_policy(&mut f, &format!("{path}.hand_wash"), policy, t_end);
        }
    }

    let exists = |obj: &ObjectRef| scenario.object_area(obj).is_some();
    let mut pairs = BTreeSet::new();
    for (k, c) in scenario.contacts.iter().enumerate() {
        let path = format!("contacts[{k}]");
        for (side, obj) in [("donor", &c.donor), ("acceptor", &c.acceptor)] {
            if !exists(obj) {
                f.error(format!("{path}.{side}"), format!("unknown object `{obj}`"));
            }
        }
        match (&c.donor, &c.acceptor) {
            (ObjectRef::Surface(_), ObjectRef::Hand(_))
            | (ObjectRef::Hand(_), ObjectRef::Surface(_)) => {}
            (ObjectRef::Hand(a), ObjectRef::Mucosa(b))
            | (ObjectRef::Mucosa(a), ObjectRef::Hand(b))
                if a == b =>
            {
                if scenario
                    .individual(a)
                    .is_some_and(|p| p.face_touch_frequency > 0.0)
                {
                    f.error(
                        path.clone(),
                        format!("face touching of `{a}` is already given by face_touch_frequency"),
                    );
                }
            }
            (ObjectRef::Surface(_), ObjectRef::Surface(_)) => {
                f.error(
                    path.clone(),
                    "direct surface-surface contacts are not modelled",
                );
            }
            _ => f.error(
                path.clone(),
                "only surface-hand and own hand-mucosa contacts are allowed \
                 (no direct contact between individuals)",
            ),
        }
        let key = if c.donor <= c.acceptor {
            (c.donor.clone(), c.acceptor.clone())
        } else {
            (c.acceptor.clone(), c.donor.clone())
        };
        if !pairs.insert(key) {
            f.error(
                path.clone(),
                format!(
                    "duplicate contact between `{}` and `{}`",
                    c.donor, c.acceptor
                ),
            );
        }
        f.nonnegative(&format!("{path}.touch_frequency"), c.touch_frequency);
        f.positive(&format!("{path}.contact_area"), c.contact_area);
        f.unit_interval(
            &format!("{path}.transfer_fraction_forward"),
            c.transfer_fraction_forward,
        );
        f.unit_interval(
            &format!("{path}.transfer_fraction_backward"),
            c.transfer_fraction_backward,
        );
        if let (Some(a), Some(b)) = (
            scenario.object_area(&c.donor),
            scenario.object_area(&c.acceptor),
        ) {
            if c.contact_area > a.min(b) {
                f.error(
                    format!("{path}.contact_area"),
                    format!(
                        "contact area {} exceeds the area of donor ({a}) or acceptor ({b})",
                        c.contact_area
                    ),
                );
            }
        }
    }

    let mut close_pairs = BTreeSet::new();
    let mut landing_sums: BTreeMap<&str, f64> = BTreeMap::new();
    for (k, c) in scenario.close_contacts.iter().enumerate() {
        let path = format!("close_contacts[{k}]");
        if scenario.individual(&c.emitter).is_none() {
            f.error(
                format!("{path}.emitter"),
                format!("unknown individual `{}`", c.emitter),
            );
        }
        if !exists(&c.acceptor) {
            f.error(
                format!("{path}.acceptor"),
                format!("unknown object `{}`", c.acceptor),
            );
        }
        if c.acceptor == ObjectRef::Mucosa(c.emitter.clone()) {
            f.error(
                format!("{path}.acceptor"),
                "an emitter cannot deposit onto its own mucosa",
            );
        }
        if !close_pairs.insert((c.emitter.as_str(), c.acceptor.clone())) {
            f.error(
                path.clone(),
                format!("duplicate close contact `{}`", c.key()),
            );
        }
        f.unit_interval(&format!("{path}.time_fraction"), c.time_fraction);
        let landing = match (&c.landing_fraction, &c.acceptor) {
            (Some(b), _) => Some(*b),
            (None, ObjectRef::Surface(id)) => scenario.surface(id).map(|s| s.ld_capture_fraction),
            (None, _) => {
                f.error(
                    format!("{path}.landing_fraction"),
                    "required when the acceptor is a hand or mucosa",
                );
                None
            }
        };
        if let Some(b) = landing {
            f.unit_interval(&format!("{path}.landing_fraction"), b);
            *landing_sums.entry(c.emitter.as_str()).or_default() += b;
        }
    }
    for (emitter, sum) in landing_sums {
        if let Some(p) = scenario.individual(emitter) {
            let budget = 1.0 - p.mask_capture_efficacy;
            if sum > budget + 1e-12 {
                f.warn(
                    format!("close_contacts[{emitter}]"),
                    format!(
                        "landing fractions of `{emitter}` sum to {sum}, above the {budget} \
                         left after mask capture"
                    ),
                );
            }
        }
    }

    f.nonnegative(
        "deposition_rate_constant",
        scenario.deposition_rate_constant,
    );
    for (id, r) in &scenario.resuspension_rates {
        if !surface_ids.contains(id.as_str()) {
            f.error(format!("resuspension_rates.{id}"), "unknown surface");
        }
        f.nonnegative(&format!("resuspension_rates.{id}"), *r);
    }
    for (id, v) in &scenario.initial_surface_loads {
        if !surface_ids.contains(id.as_str()) {
            f.error(format!("initial_surface_loads.{id}"), "unknown surface");
        }
        f.nonnegative(&format!("initial_surface_loads.{id}"), *v);
    }

    let eps = scenario.event_smoothing_epsilon;
    f.positive("event_smoothing_epsilon", eps);
    if scenario.event_mode == EventMode::Smoothed {
        let shortest = scenario
            .individuals
            .iter()
            .map(|p| p.duration)
            .fold(f64::INFINITY, f64::min);
        if eps * SMOOTHING_DURATION_RATIO > shortest {
            f.error(
                "event_smoothing_epsilon",
                format!(
                    "epsilon = {eps} h must be at least {SMOOTHING_DURATION_RATIO} times \
                     smaller than the shortest stay ({shortest} h)"
                ),
            );
        }
    }

    f.0
}

fn check_policy(f: &mut Findings, path: &str, policy: &CleaningPolicy, t_end: f64) {
    f.nonnegative(&format!("{path}.lrv"), policy.lrv);
    f.nonnegative(&format!("{path}.frequency"), policy.frequency);
    match policy.mode {
        CleaningMode::Discrete => {
            if policy.event_times.windows(2).any(|w| w[0] > w[1]) {
                f.error(format!("{path}.event_times"), "must be sorted ascending");
            }
            if let Some(t) = policy
                .event_times
                .iter()
                .find(|t| !(0.0..=t_end).contains(*t))
            {
                f.error(
                    format!("{path}.event_times"),
                    format!("event at {t} h lies outside [0, {t_end}]"),
                );
            }
        }
        CleaningMode::Continuous => {
            if !policy.event_times.is_empty() {
                f.error(
                    format!("{path}.event_times"),
                    "continuous cleaning takes a frequency, not event times",
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin_fixture;

    fn errors(s: &Scenario) -> Vec<Finding> {
        validate(s).into_iter().filter(Finding::is_error).collect()
    }

    #[test]
    fn fixtures_are_clean() {
        for name in crate::scenario::FIXTURE_NAMES {
            let s = builtin_fixture(name).unwrap();
            assert!(errors(&s).is_empty(), "{name}: {:?}", validate(&s));
        }
        assert!(validate(&builtin_fixture("case-study-2").unwrap()).is_empty());
    }

    #[test]
    fn time_fraction_out_of_range() {
        let mut s = builtin_fixture("case-study-1").unwrap();
        s.close_contacts[0].time_fraction = 1.2;
        let e = errors(&s);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].path, "close_contacts[0].time_fraction");
    }

    #[test]
    fn duplicate_surface_ids() {
        let mut s = builtin_fixture("case-study-1").unwrap();
        s.surfaces[1].id = s.surfaces[0].id.clone();
        assert!(errors(&s)
            .iter()
            .any(|f| f.message.contains("duplicate surface id")));
    }

    #[test]
    fn contact_area_larger_than_object() {
        let mut s = builtin_fixture("case-study-1").unwrap();
        s.contacts[0].contact_area = 1e4;
        assert!(errors(&s)
            .iter()
            .any(|f| f.path == "contacts[0].contact_area"));
    }

    #[test]
    fn no_cross_person_or_surface_pairs() {
        let mut s = builtin_fixture("case-study-1").unwrap();
        s.contacts[0].donor = ObjectRef::Hand("infected".into());
        s.contacts[0].acceptor = ObjectRef::Hand("susceptible".into());
        s.contacts[1].donor = ObjectRef::Surface("desk".into());
        s.contacts[1].acceptor = ObjectRef::Surface("document".into());
        let e = errors(&s);
        assert!(e.iter().any(|f| f.path.starts_with("contacts[0]")));
        assert!(e.iter().any(|f| f.path.starts_with("contacts[1]")));
    }

    #[test]
    fn stay_beyond_observation_window() {
        let mut s = builtin_fixture("case-study-1").unwrap();
        s.individuals[1].duration = 9.0;
        assert!(!errors(&s).is_empty());
    }

    #[test]
    fn landing_fractions_above_one_warn() {
        let mut s = builtin_fixture("case-study-1").unwrap();
        for c in &mut s.close_contacts {
            c.landing_fraction = Some(0.6);
        }
        let all = validate(&s);
        assert!(all.iter().all(|f| !f.is_error()));
        assert!(all.iter().any(|f| f.severity == Severity::Warning));
    }

    #[test]
    fn smoothing_width_against_shortest_stay() {
        let mut s = builtin_fixture("case-study-1").unwrap();
        s.event_mode = EventMode::Smoothed;
        s.event_smoothing_epsilon = 0.05;
        assert!(!errors(&s).is_empty());
        s.event_smoothing_epsilon = 1e-3;
        assert!(errors(&s).is_empty());
    }
}
