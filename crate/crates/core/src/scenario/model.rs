//! Declarative scenario types.
//!
//! Units are fixed throughout the crate: hours, viral particles, cm² for
//! surface and contact areas, m³ for air volume and m³/h for air flows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The enclosed space being simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SettingDoc")]
pub struct Setting {
    /// Air volume, m³.
    pub air_volume: f64,
    /// Ventilation air flow, m³/h.
    pub ventilation_flow: f64,
    /// End of the observation window, h.
    pub observation_end: f64,
}

impl Setting {
    pub fn air_changes_per_hour(&self) -> f64 {
        self.ventilation_flow / self.air_volume
    }
}

/// On-disk form of [`Setting`]: ventilation may be given either as a flow
/// or as air changes per hour.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SettingDoc {
    air_volume: f64,
    #[serde(default)]
    ventilation_flow: Option<f64>,
    #[serde(default)]
    air_changes_per_hour: Option<f64>,
    observation_end: f64,
}

impl TryFrom<SettingDoc> for Setting {
    type Error = String;

    fn try_from(doc: SettingDoc) -> Result<Self, Self::Error> {
        let ventilation_flow = match (doc.ventilation_flow, doc.air_changes_per_hour) {
            (Some(q), None) => q,
            (None, Some(ach)) => ach * doc.air_volume,
            (Some(_), Some(_)) => {
                return Err(
                    "setting: give either ventilation_flow or air_changes_per_hour, not both"
                        .into(),
                )
            }
            (None, None) => {
                return Err("setting: missing ventilation_flow (or air_changes_per_hour)".into())
            }
        };
        Ok(Setting {
            air_volume: doc.air_volume,
            ventilation_flow,
            observation_end: doc.observation_end,
        })
    }
}

/// Surface or medium type with its viral half-life.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// `porous`, `nonporous`, `stainless-steel`, `skin`, `air`, or any
    /// custom identifier.
    pub name: String,
    /// Half-life of the virus on (in) this material, h.
    pub half_life: f64,
}

impl Material {
    pub fn new(name: &str, half_life: f64) -> Self {
        Material {
            name: name.to_string(),
            half_life,
        }
    }

    pub fn inactivation_constant(&self) -> f64 {
        std::f64::consts::LN_2 / self.half_life
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleaningMode {
    Continuous,
    Discrete,
}

/// Hand-washing or surface-cleaning regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleaningPolicy {
    pub mode: CleaningMode,
    /// Log10 reduction achieved by one cleaning.
    pub lrv: f64,
    /// Cleanings per hour (continuous mode).
    #[serde(default)]
    pub frequency: f64,
    /// Cleaning instants, h (discrete mode).
    #[serde(default)]
    pub event_times: Vec<f64>,
}

impl CleaningPolicy {
    pub fn discrete(lrv: f64, event_times: Vec<f64>) -> Self {
        CleaningPolicy {
            mode: CleaningMode::Discrete,
            lrv,
            frequency: 0.0,
            event_times,
        }
    }

    pub fn continuous(lrv: f64, frequency: f64) -> Self {
        CleaningPolicy {
            mode: CleaningMode::Continuous,
            lrv,
            frequency,
            event_times: Vec::new(),
        }
    }

    /// Removal efficiency `lrv * ln 10` of a single cleaning.
    pub fn efficiency(&self) -> f64 {
        self.lrv * std::f64::consts::LN_10
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Surface {
    pub id: String,
    /// cm².
    pub area: f64,
    /// Name of an entry in [`Scenario::materials`].
    pub material: String,
    /// Fraction of an emitter's large droplets landing on this surface while
    /// in close proximity; default for close contacts that omit
    /// `landing_fraction`.
    #[serde(default)]
    pub ld_capture_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cleaning: Option<CleaningPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Individual {
    pub id: String,
    pub infected: bool,
    /// h.
    pub entry_time: f64,
    /// h.
    pub duration: f64,
    /// cm².
    pub hand_area: f64,
    /// cm².
    pub mucosa_area: f64,
    /// m³/h.
    pub respiration_rate: f64,
    /// Viral particles expelled per hour (zero for susceptibles).
    #[serde(default)]
    pub shedding_rate: f64,
    #[serde(default)]
    pub fraction_large_droplets: f64,
    /// Fraction of large droplets captured at the source by a face covering.
    #[serde(default)]
    pub mask_capture_efficacy: f64,
    /// Fraction of small droplets filtered by the face covering.
    #[serde(default)]
    pub mask_aerosol_filtration: f64,
    /// Viral load on the mucous membranes of an infected individual.
    #[serde(default)]
    pub initial_mucosa_load: f64,
    /// Hand-to-face touches per hour.
    #[serde(default)]
    pub face_touch_frequency: f64,
    /// Contact area of one face touch, cm².
    #[serde(default)]
    pub face_contact_area: f64,
    #[serde(default = "default_face_fraction")]
    pub hand_to_mucosa_fraction: f64,
    #[serde(default = "default_face_fraction")]
    pub mucosa_to_hand_fraction: f64,
    /// Dose-response parameter k_d, viral particles.
    pub dose_response: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_wash: Option<CleaningPolicy>,
}

fn default_face_fraction() -> f64 {
    0.5
}

impl Individual {
    pub fn exit_time(&self) -> f64 {
        self.entry_time + self.duration
    }
}

/// A compartment that can exchange virus by touch or receive droplets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectRef {
    Surface(String),
    Hand(String),
    Mucosa(String),
}

impl ObjectRef {
    pub fn owner(&self) -> Option<&str> {
        match self {
            ObjectRef::Surface(_) => None,
            ObjectRef::Hand(id) | ObjectRef::Mucosa(id) => Some(id),
        }
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectRef::Surface(id) => write!(f, "{id}"),
            ObjectRef::Hand(id) => write!(f, "hand:{id}"),
            ObjectRef::Mucosa(id) => write!(f, "mucosa:{id}"),
        }
    }
}

impl FromStr for ObjectRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if !s.is_empty() => Ok(ObjectRef::Surface(s.to_string())),
            Some(("hand", id)) if !id.is_empty() => Ok(ObjectRef::Hand(id.to_string())),
            Some(("mucosa", id)) if !id.is_empty() => Ok(ObjectRef::Mucosa(id.to_string())),
            _ => Err(format!(
                "bad object reference `{s}` (expected `<surface>`, `hand:<id>` or `mucosa:<id>`)"
            )),
        }
    }
}

impl Serialize for ObjectRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ObjectRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Average touch behaviour between two objects. Frequency and contact area
/// are symmetric in the pair; transfer fractions are directional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSpec {
    pub donor: ObjectRef,
    pub acceptor: ObjectRef,
    /// Contacts per hour.
    pub touch_frequency: f64,
    /// cm².
    pub contact_area: f64,
    /// Fraction transferred donor → acceptor per contact.
    pub transfer_fraction_forward: f64,
    /// Fraction transferred acceptor → donor per contact.
    pub transfer_fraction_backward: f64,
}

impl ContactSpec {
    pub fn key(&self) -> String {
        format!("{}->{}", self.donor, self.acceptor)
    }
}

/// Large-droplet exposure of an acceptor while near an emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloseContactSpec {
    pub emitter: String,
    pub acceptor: ObjectRef,
    /// Fraction of co-presence time spent in close proximity.
    pub time_fraction: f64,
    /// Average fraction of emitted large droplets landing on the acceptor;
    /// defaults to the surface's `ld_capture_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landing_fraction: Option<f64>,
}

impl CloseContactSpec {
    pub fn key(&self) -> String {
        format!("{}->{}", self.emitter, self.acceptor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventMode {
    /// Integrate between events and apply instantaneous state changes.
    #[default]
    ExactJump,
    /// Replace steps and impulses by ramps and triangular pulses of width ε.
    Smoothed,
}

impl fmt::Display for EventMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventMode::ExactJump => "exact-jump",
            EventMode::Smoothed => "smoothed",
        })
    }
}

impl FromStr for EventMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact-jump" => Ok(EventMode::ExactJump),
            "smoothed" => Ok(EventMode::Smoothed),
            other => Err(format!(
                "unknown event mode `{other}` (expected exact-jump or smoothed)"
            )),
        }
    }
}

pub const DEFAULT_SMOOTHING_EPSILON: f64 = 1e-3;

fn default_epsilon() -> f64 {
    DEFAULT_SMOOTHING_EPSILON
}

fn default_skin() -> String {
    "skin".into()
}

fn default_air() -> String {
    "air".into()
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// Complete description of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub setting: Setting,
    #[serde(default)]
    pub event_mode: EventMode,
    /// Ramp/pulse width ε for smoothed events, h.
    #[serde(default = "default_epsilon")]
    pub event_smoothing_epsilon: f64,
    /// Small-droplet deposition rate constant, m³/(cm²·h).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub deposition_rate_constant: f64,
    /// Resuspension rate constant per surface id, per hour.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub resuspension_rates: BTreeMap<String, f64>,
    /// Nonzero starting loads per surface id (default: uncontaminated).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_surface_loads: BTreeMap<String, f64>,
    #[serde(default = "default_skin")]
    pub hand_material: String,
    #[serde(default = "default_skin")]
    pub mucosa_material: String,
    #[serde(default = "default_air")]
    pub air_material: String,
    pub materials: Vec<Material>,
    #[serde(default)]
    pub surfaces: Vec<Surface>,
    pub individuals: Vec<Individual>,
    #[serde(default)]
    pub contacts: Vec<ContactSpec>,
    #[serde(default)]
    pub close_contacts: Vec<CloseContactSpec>,
}

impl Scenario {
    pub fn material(&self, name: &str) -> Option<&Material> {
        self.materials.iter().find(|m| m.name == name)
    }

    pub fn surface_index(&self, id: &str) -> Option<usize> {
        self.surfaces.iter().position(|s| s.id == id)
    }

    pub fn individual_index(&self, id: &str) -> Option<usize> {
        self.individuals.iter().position(|p| p.id == id)
    }

    pub fn surface(&self, id: &str) -> Option<&Surface> {
        self.surfaces.iter().find(|s| s.id == id)
    }

    pub fn individual(&self, id: &str) -> Option<&Individual> {
        self.individuals.iter().find(|p| p.id == id)
    }

    /// Area (cm²) of a touchable object, if it exists.
    pub fn object_area(&self, obj: &ObjectRef) -> Option<f64> {
        match obj {
            ObjectRef::Surface(id) => self.surface(id).map(|s| s.area),
            ObjectRef::Hand(id) => self.individual(id).map(|p| p.hand_area),
            ObjectRef::Mucosa(id) => self.individual(id).map(|p| p.mucosa_area),
        }
    }

    /// Interval during which at least one infected and one susceptible
    /// individual could be together: the overlap of the infected and
    /// susceptible presence envelopes. `None` when they never overlap.
    pub fn co_presence_window(&self) -> Option<(f64, f64)> {
        let envelope = |infected: bool| {
            self.individuals
                .iter()
                .filter(|p| p.infected == infected)
                .fold(None, |acc: Option<(f64, f64)>, p| {
                    let (a, b) = (p.entry_time, p.exit_time());
                    Some(match acc {
                        None => (a, b),
                        Some((lo, hi)) => (lo.min(a), hi.max(b)),
                    })
                })
        };
        let (i0, i1) = envelope(true)?;
        let (s0, s1) = envelope(false)?;
        let (start, end) = (i0.max(s0), i1.min(s1));
        (end > start).then_some((start, end))
    }
}
