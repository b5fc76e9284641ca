#![allow(dead_code)]

use fomes_core::scenario::{parse_scenario, Scenario};

pub const LN2: f64 = std::f64::consts::LN_2;

/// One idle person and a single pre-contaminated surface.
pub fn decay_scenario(load: f64, half_life: f64) -> Scenario {
    parse_scenario(&format!(
        r#"
name = "decay"
initial_surface_loads = {{ bench = {load} }}

[setting]
air_volume = 30.0
ventilation_flow = 15.0
observation_end = 6.0

[[materials]]
name = "air"
half_life = 1.1
[[materials]]
name = "skin"
half_life = 3.5
[[materials]]
name = "steel"
half_life = {half_life}

[[surfaces]]
id = "bench"
area = 200.0
material = "steel"

[[individuals]]
id = "visitor"
infected = false
entry_time = 0.0
duration = 6.0
hand_area = 150.0
mucosa_area = 400.0
respiration_rate = 0.4
dose_response = 1e5
"#
    ))
    .unwrap()
}

/// A single emitter in an empty room: air only.
pub fn emitter_scenario(shedding: f64, volume: f64, flow: f64, stay: f64, end: f64) -> Scenario {
    parse_scenario(&format!(
        r#"
name = "emitter"

[setting]
air_volume = {volume}
ventilation_flow = {flow}
observation_end = {end}

[[materials]]
name = "air"
half_life = 1.1
[[materials]]
name = "skin"
half_life = 3.5

[[individuals]]
id = "source"
infected = true
entry_time = 0.0
duration = {stay}
hand_area = 150.0
mucosa_area = 400.0
respiration_rate = 0.5
shedding_rate = {shedding}
fraction_large_droplets = 0.25
initial_mucosa_load = 1e6
face_touch_frequency = 10.0
face_contact_area = 8.0
dose_response = 1e5
"#
    ))
    .unwrap()
}

/// A small uncalibrated setting exercising every pathway and event type:
/// two surfaces, one infected visitor and two susceptibles with staggered
/// stays, discrete surface cleaning and hand washing.
pub const TOY: &str = r#"
name = "toy"

[setting]
air_volume = 25.0
air_changes_per_hour = 2.0
observation_end = 6.0

[[materials]]
name = "air"
half_life = 1.1
[[materials]]
name = "skin"
half_life = 3.5
[[materials]]
name = "wood"
half_life = 4.0
[[materials]]
name = "steel"
half_life = 5.6

[[surfaces]]
id = "table"
area = 3000.0
material = "wood"
ld_capture_fraction = 0.3
cleaning = { mode = "discrete", lrv = 2.0, event_times = [2.5] }

[[surfaces]]
id = "handle"
area = 50.0
material = "steel"
ld_capture_fraction = 0.01
cleaning = { mode = "discrete", lrv = 1.5, event_times = [1.5, 4.5] }

[[individuals]]
id = "ann"
infected = true
entry_time = 0.5
duration = 3.0
hand_area = 150.0
mucosa_area = 400.0
respiration_rate = 0.5
shedding_rate = 2e6
fraction_large_droplets = 0.4
initial_mucosa_load = 2e6
face_touch_frequency = 12.0
face_contact_area = 8.0
dose_response = 3e5
hand_wash = { mode = "discrete", lrv = 1.0, event_times = [3.0] }

[[individuals]]
id = "ben"
infected = false
entry_time = 0.0
duration = 5.0
hand_area = 150.0
mucosa_area = 400.0
respiration_rate = 0.45
face_touch_frequency = 15.0
face_contact_area = 7.5
dose_response = 3e5
hand_wash = { mode = "discrete", lrv = 1.0, event_times = [2.0] }

[[individuals]]
id = "cat"
infected = false
entry_time = 1.0
duration = 4.5
hand_area = 140.0
mucosa_area = 380.0
respiration_rate = 0.35
face_touch_frequency = 10.0
face_contact_area = 7.0
dose_response = 3e5

[[contacts]]
donor = "hand:ann"
acceptor = "table"
touch_frequency = 8.0
contact_area = 60.0
transfer_fraction_forward = 0.1
transfer_fraction_backward = 0.2

[[contacts]]
donor = "hand:ann"
acceptor = "handle"
touch_frequency = 2.0
contact_area = 30.0
transfer_fraction_forward = 0.08
transfer_fraction_backward = 0.16

[[contacts]]
donor = "hand:ben"
acceptor = "table"
touch_frequency = 10.0
contact_area = 60.0
transfer_fraction_forward = 0.1
transfer_fraction_backward = 0.2

[[contacts]]
donor = "hand:cat"
acceptor = "handle"
touch_frequency = 3.0
contact_area = 30.0
transfer_fraction_forward = 0.08
transfer_fraction_backward = 0.16

[[close_contacts]]
emitter = "ann"
acceptor = "table"
time_fraction = 0.8

[[close_contacts]]
emitter = "ann"
acceptor = "hand:ben"
time_fraction = 0.5
landing_fraction = 0.02

[[close_contacts]]
emitter = "ann"
acceptor = "mucosa:ben"
time_fraction = 0.5
landing_fraction = 0.005
"#;

pub fn toy() -> Scenario {
    parse_scenario(TOY).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
