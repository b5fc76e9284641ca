//! Built-in case studies: a one-to-one meeting, two people working side by
//! side in the same small office, and a 39-person graduate student office.

use std::fmt;
use std::str::FromStr;

use super::io::{ensure_valid, ScenarioError};
use super::model::{
    CleaningPolicy, CloseContactSpec, ContactSpec, EventMode, Individual, Material, ObjectRef,
    Scenario, Setting, Surface, DEFAULT_SMOOTHING_EPSILON,
};

/// Virus and physiology constants shared by all case studies.
pub mod virus {
    pub const SHEDDING_RATE: f64 = 1.13015e7;
    pub const FRACTION_LARGE_DROPLETS: f64 = 0.5;
    pub const INITIAL_MUCOSA_LOAD: f64 = 4.0e6;
    pub const DOSE_RESPONSE: f64 = 3.95e5;
    pub const RESPIRATION_RATE: f64 = 0.39;
    pub const SURFACE_LRV: f64 = 2.0;
    pub const HAND_LRV: f64 = 1.1;

    pub const HALF_LIFE_AIR: f64 = 1.1;
    pub const HALF_LIFE_POROUS: f64 = 3.46;
    pub const HALF_LIFE_NONPOROUS: f64 = 6.81;
    pub const HALF_LIFE_STAINLESS: f64 = 5.63;
    pub const HALF_LIFE_SKIN: f64 = 3.5;

    pub const MUCOSA_TO_HAND: f64 = 0.5;
    pub const HAND_TO_MUCOSA: f64 = 0.5;

    pub const HAND_AREA: f64 = 147.02;
    pub const MUCOSA_AREA: f64 = 391.7;
    pub const FACE_CONTACT_AREA: f64 = 7.67;
    pub const FACE_TOUCH_FREQUENCY: f64 = 16.0;
}

/// Per-contact transfer fractions `(hand -> surface, surface -> hand)` for a
/// surface material.
pub fn hand_transfer_fractions(material: &str) -> (f64, f64) {
    match material {
        "porous" => (0.03, 0.8),
        "nonporous" => (0.07, 0.12),
        "stainless-steel" => (0.08, 0.16),
        other => panic!("no transfer fractions tabulated for `{other}`"),
    }
}

pub const FIXTURE_NAMES: [&str; 3] = ["case-study-1", "case-study-2", "case-study-3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureName {
    CaseStudy1,
    CaseStudy2,
    CaseStudy3,
}

impl FromStr for FixtureName {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "case-study-1" => Ok(FixtureName::CaseStudy1),
            "case-study-2" => Ok(FixtureName::CaseStudy2),
            "case-study-3" => Ok(FixtureName::CaseStudy3),
            other => Err(ScenarioError::UnknownFixture(other.to_string())),
        }
    }
}

impl fmt::Display for FixtureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FixtureName::CaseStudy1 => "case-study-1",
            FixtureName::CaseStudy2 => "case-study-2",
            FixtureName::CaseStudy3 => "case-study-3",
        })
    }
}

/// Returns a validated built-in scenario by name.
pub fn builtin_fixture(name: &str) -> Result<Scenario, ScenarioError> {
    let scenario = match name.parse::<FixtureName>()? {
        FixtureName::CaseStudy1 => small_office(&SmallOfficeParams::case_study_1()),
        FixtureName::CaseStudy2 => small_office(&SmallOfficeParams::case_study_2()),
        FixtureName::CaseStudy3 => case_study_3(),
    };
    ensure_valid(scenario)
}

fn materials() -> Vec<Material> {
    use virus::*;
    vec![
        Material::new("air", HALF_LIFE_AIR),
        Material::new("skin", HALF_LIFE_SKIN),
        Material::new("porous", HALF_LIFE_POROUS),
        Material::new("nonporous", HALF_LIFE_NONPOROUS),
        Material::new("stainless-steel", HALF_LIFE_STAINLESS),
    ]
}

fn person(id: &str, infected: bool, entry_time: f64, duration: f64) -> Individual {
    use virus::*;
    Individual {
        id: id.to_string(),
        infected,
        entry_time,
        duration,
        hand_area: HAND_AREA,
        mucosa_area: MUCOSA_AREA,
        respiration_rate: RESPIRATION_RATE,
        shedding_rate: if infected { SHEDDING_RATE } else { 0.0 },
        fraction_large_droplets: FRACTION_LARGE_DROPLETS,
        mask_capture_efficacy: 0.0,
        mask_aerosol_filtration: 0.0,
        initial_mucosa_load: if infected { INITIAL_MUCOSA_LOAD } else { 0.0 },
        face_touch_frequency: FACE_TOUCH_FREQUENCY,
        face_contact_area: FACE_CONTACT_AREA,
        hand_to_mucosa_fraction: HAND_TO_MUCOSA,
        mucosa_to_hand_fraction: MUCOSA_TO_HAND,
        dose_response: DOSE_RESPONSE,
        hand_wash: None,
    }
}

fn touch(person: &str, surface: &Surface, frequency: f64, contact_area: f64) -> ContactSpec {
    let (to_surface, to_hand) = hand_transfer_fractions(&surface.material);
    ContactSpec {
        donor: ObjectRef::Hand(person.to_string()),
        acceptor: ObjectRef::Surface(surface.id.clone()),
        touch_frequency: frequency,
        contact_area,
        transfer_fraction_forward: to_surface,
        transfer_fraction_backward: to_hand,
    }
}

fn near(
    emitter: &str,
    acceptor: ObjectRef,
    time_fraction: f64,
    landing: Option<f64>,
) -> CloseContactSpec {
    CloseContactSpec {
        emitter: emitter.to_string(),
        acceptor,
        time_fraction,
        landing_fraction: landing,
    }
}

fn surface(id: &str, area: f64, material: &str, ld_capture_fraction: f64) -> Surface {
    Surface {
        id: id.to_string(),
        area,
        material: material.to_string(),
        ld_capture_fraction,
        cleaning: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallOfficeLayout {
    /// Face-to-face meeting around one shared desk.
    SharedDesk,
    /// Side by side, each at their own desk.
    OwnDesks,
}

/// Free parameters of the two-person office case studies.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallOfficeParams {
    pub name: String,
    pub layout: SmallOfficeLayout,
    /// Close-contact time fraction between the two people.
    pub theta_people: f64,
    /// Close-contact time fraction with the shared document.
    pub theta_document: f64,
    /// Close-contact time fraction of each person with their own desk
    /// (the shared desk in the meeting layout).
    pub theta_own_desk: f64,
    /// Close-contact time fraction with the other person's desk.
    pub theta_other_desk: f64,
    pub theta_door_handle: f64,
    pub document_touch_frequency: f64,
    pub desk_touch_frequency: f64,
    /// Touches per hour of the other person's desk (own-desk layout).
    pub other_desk_touch_frequency: f64,
    pub door_handle_touch_frequency: f64,
    /// Fraction of the infected person's large droplets landing on the
    /// susceptible person's hands while in close proximity.
    pub beta_hand: f64,
    /// Fraction landing directly on the susceptible person's mucosa.
    pub beta_mucosa: f64,
    pub hand_lrv: f64,
    pub surface_lrv: f64,
    /// Times of hand and hard-surface disinfection, h.
    pub cleaning_times: Vec<f64>,
}

impl SmallOfficeParams {
    /// LD landing fraction onto the other person's hands. Not tabulated;
    /// fixed once against the meeting-room cleaning reductions and fomite
    /// dominance.
    pub const BETA_HAND: f64 = 0.06;
    /// LD landing fraction onto the other person's mucosa; fixed together
    /// with [`Self::BETA_HAND`].
    pub const BETA_MUCOSA: f64 = 0.0005;

    pub fn case_study_1() -> Self {
        SmallOfficeParams {
            name: "case-study-1".into(),
            layout: SmallOfficeLayout::SharedDesk,
            theta_people: 0.9,
            theta_document: 0.9,
            theta_own_desk: 0.9,
            theta_other_desk: 0.9,
            theta_door_handle: 0.05,
            document_touch_frequency: 5.0,
            desk_touch_frequency: 20.0,
            other_desk_touch_frequency: 0.0,
            door_handle_touch_frequency: 1.0,
            beta_hand: Self::BETA_HAND,
            beta_mucosa: Self::BETA_MUCOSA,
            hand_lrv: virus::HAND_LRV,
            surface_lrv: virus::SURFACE_LRV,
            cleaning_times: Vec::new(),
        }
    }

    pub fn case_study_2() -> Self {
        SmallOfficeParams {
            name: "case-study-2".into(),
            layout: SmallOfficeLayout::OwnDesks,
            theta_people: 0.05,
            theta_document: 0.5,
            theta_own_desk: 0.9,
            theta_other_desk: 0.05,
            document_touch_frequency: 2.5,
            other_desk_touch_frequency: 1.0,
            ..Self::case_study_1()
        }
    }
}

/// Two-person office: one infected person stays 4 h, the susceptible one 8 h.
pub fn small_office(params: &SmallOfficeParams) -> Scenario {
    const INFECTED: &str = "infected";
    const SUSCEPTIBLE: &str = "susceptible";
    let cleaning = |lrv: f64| Some(CleaningPolicy::discrete(lrv, params.cleaning_times.clone()));

    let mut door = surface("door-handle", 65.0, "stainless-steel", 0.006);
    door.cleaning = cleaning(params.surface_lrv);
    let document = surface("document", 623.7, "porous", 0.05);
    let mut desks = match params.layout {
        SmallOfficeLayout::SharedDesk => vec![surface("desk", 6000.0, "nonporous", 0.4)],
        SmallOfficeLayout::OwnDesks => vec![
            surface("desk-1", 6000.0, "nonporous", 0.4),
            surface("desk-2", 6000.0, "nonporous", 0.4),
        ],
    };
    for d in &mut desks {
        d.cleaning = cleaning(params.surface_lrv);
    }

    let mut infected = person(INFECTED, true, 0.0, 4.0);
    let mut susceptible = person(SUSCEPTIBLE, false, 0.0, 8.0);
    infected.hand_wash = cleaning(params.hand_lrv);
    susceptible.hand_wash = cleaning(params.hand_lrv);

    let mut contacts = Vec::new();
    for who in [INFECTED, SUSCEPTIBLE] {
        contacts.push(touch(who, &door, params.door_handle_touch_frequency, 36.0));
        contacts.push(touch(who, &document, params.document_touch_frequency, 36.8));
    }
    let mut close_contacts = vec![
        near(
            INFECTED,
            ObjectRef::Surface(document.id.clone()),
            params.theta_document,
            None,
        ),
        near(
            INFECTED,
            ObjectRef::Surface(door.id.clone()),
            params.theta_door_handle,
            None,
        ),
    ];
    match params.layout {
        SmallOfficeLayout::SharedDesk => {
            for who in [INFECTED, SUSCEPTIBLE] {
                contacts.push(touch(who, &desks[0], params.desk_touch_frequency, 73.5));
            }
            close_contacts.push(near(
                INFECTED,
                ObjectRef::Surface(desks[0].id.clone()),
                params.theta_own_desk,
                None,
            ));
        }
        SmallOfficeLayout::OwnDesks => {
            // desk-1 belongs to the susceptible person, desk-2 to the infected one.
            let (own, other) = (
                params.desk_touch_frequency,
                params.other_desk_touch_frequency,
            );
            contacts.push(touch(SUSCEPTIBLE, &desks[0], own, 73.5));
            contacts.push(touch(INFECTED, &desks[1], own, 73.5));
            if other > 0.0 {
                contacts.push(touch(SUSCEPTIBLE, &desks[1], other, 73.5));
                contacts.push(touch(INFECTED, &desks[0], other, 73.5));
            }
            close_contacts.push(near(
                INFECTED,
                ObjectRef::Surface(desks[0].id.clone()),
                params.theta_other_desk,
                None,
            ));
            close_contacts.push(near(
                INFECTED,
                ObjectRef::Surface(desks[1].id.clone()),
                params.theta_own_desk,
                None,
            ));
        }
    }
    close_contacts.push(near(
        INFECTED,
        ObjectRef::Hand(SUSCEPTIBLE.into()),
        params.theta_people,
        Some(params.beta_hand),
    ));
    close_contacts.push(near(
        INFECTED,
        ObjectRef::Mucosa(SUSCEPTIBLE.into()),
        params.theta_people,
        Some(params.beta_mucosa),
    ));

    let mut surfaces = vec![door, document];
    surfaces.extend(desks);
    Scenario {
        name: params.name.clone(),
        setting: Setting {
            air_volume: 40.0,
            ventilation_flow: 40.0,
            observation_end: 8.0,
        },
        event_mode: EventMode::ExactJump,
        event_smoothing_epsilon: DEFAULT_SMOOTHING_EPSILON,
        deposition_rate_constant: 0.0,
        resuspension_rates: Default::default(),
        initial_surface_loads: Default::default(),
        hand_material: "skin".into(),
        mucosa_material: "skin".into(),
        air_material: "air".into(),
        materials: materials(),
        surfaces,
        individuals: vec![infected, susceptible],
        contacts,
        close_contacts,
    }
}

/// Students per cabinet and per friend group in the graduate office.
pub const CABINET_SIZE: usize = 13;
pub const GROUP_SIZE: usize = 3;
pub const STUDENTS: usize = 39;

/// Graduate student office: student-1 is infected and leaves after 4 h; the
/// 38 others stay 8 h; observation runs for 24 h.
///
/// Cabinet k is used by students 13(k-1)+1 ..= 13k. Friend groups are
/// consecutive triples (1-3, 4-6, ...); friends spend a pairwise 12.5% of
/// their time in close contact but stay away from each other's desks and
/// chairs.
pub fn case_study_3() -> Scenario {
    let student = |k: usize| format!("student-{k}");

    // (id stem, area, contact area, touch frequency, θ, β, material)
    let desk = (6000.0, 73.5, 20.2, 0.8, 0.07, "nonporous");
    let chair = (4260.0, 73.5, 8.9, 0.4, 0.05, "porous");
    let cabinet = (10.0, 7.0, 0.14, 0.03, 0.01, "stainless-steel");
    let public = [
        ("printer", 35.0, 17.5, 0.28, 0.01, 0.05, "nonporous"),
        ("water-dispenser", 12.0, 6.0, 0.31, 0.005, 0.05, "nonporous"),
        (
            "door-handle",
            100.0,
            70.0,
            0.05,
            0.005,
            0.01,
            "stainless-steel",
        ),
    ];
    let (theta_group, beta_group_hand, beta_group_mucosa) = (0.125, 0.01, 0.005);

    let mut surfaces = Vec::new();
    for k in 1..=STUDENTS / CABINET_SIZE {
        surfaces.push(surface(
            &format!("cabinet-handle-{k}"),
            cabinet.0,
            cabinet.5,
            cabinet.4,
        ));
    }
    for (id, area, _, _, _, beta, material) in public {
        surfaces.push(surface(id, area, material, beta));
    }
    for k in 1..=STUDENTS {
        surfaces.push(surface(&format!("desk-{k}"), desk.0, desk.5, desk.4));
        surfaces.push(surface(&format!("chair-{k}"), chair.0, chair.5, chair.4));
    }
    let find = |id: &str| surfaces.iter().find(|s| s.id == id).unwrap();

    let mut individuals = Vec::new();
    let mut contacts = Vec::new();
    let mut close_contacts = Vec::new();
    for k in 1..=STUDENTS {
        let me = student(k);
        let infected = k == 1;
        individuals.push(person(&me, infected, 0.0, if infected { 4.0 } else { 8.0 }));

        let cabinet_id = format!("cabinet-handle-{}", (k - 1) / CABINET_SIZE + 1);
        let own = [
            (format!("desk-{k}"), desk.1, desk.2, desk.3),
            (format!("chair-{k}"), chair.1, chair.2, chair.3),
            (cabinet_id, cabinet.1, cabinet.2, cabinet.3),
        ];
        for (id, contact_area, frequency, theta) in own {
            contacts.push(touch(&me, find(&id), frequency, contact_area));
            close_contacts.push(near(&me, ObjectRef::Surface(id), theta, None));
        }
        for (id, _, contact_area, frequency, theta, _, _) in public {
            contacts.push(touch(&me, find(id), frequency, contact_area));
            close_contacts.push(near(&me, ObjectRef::Surface(id.into()), theta, None));
        }

        let group_start = (k - 1) / GROUP_SIZE * GROUP_SIZE + 1;
        for friend in (group_start..group_start + GROUP_SIZE).filter(|&f| f != k) {
            let friend = student(friend);
            close_contacts.push(near(
                &me,
                ObjectRef::Hand(friend.clone()),
                theta_group,
                Some(beta_group_hand),
            ));
            close_contacts.push(near(
                &me,
                ObjectRef::Mucosa(friend),
                theta_group,
                Some(beta_group_mucosa),
            ));
        }
    }

    Scenario {
        name: "case-study-3".into(),
        setting: Setting {
            air_volume: 400.0,
            ventilation_flow: 400.0,
            observation_end: 24.0,
        },
        event_mode: EventMode::ExactJump,
        event_smoothing_epsilon: DEFAULT_SMOOTHING_EPSILON,
        deposition_rate_constant: 0.0,
        resuspension_rates: Default::default(),
        initial_surface_loads: Default::default(),
        hand_material: "skin".into(),
        mucosa_material: "skin".into(),
        air_material: "air".into(),
        materials: materials(),
        surfaces,
        individuals,
        contacts,
        close_contacts,
    }
}
