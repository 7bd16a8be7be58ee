//! JSON documents for plants, exosystems, controllers and run configurations.
//!
//! Matrices are arrays of rows; an entry is a plain number when its imaginary
//! part is zero and a `[re, im]` pair otherwise. Serialization is
//! deterministic and floats use shortest round-trip formatting, so reading
//! and re-writing a document reproduces it byte for byte.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::heat2d::{benchmark_exosystem, build_heat_plant, HeatModelConfig};
use crate::minimal::PerturbedPlant;
use crate::numerics::{Matrix, Vector, C64};
use crate::sim::{PerturbationTargets, SweepConfig};
use crate::stabilize::StabilizingGains;
use crate::sysmodel::{Controller, ControllerMeta, Exosystem, Family, Labels, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl From<C64> for Entry {
    fn from(z: C64) -> Self {
        if z.im == 0.0 && !z.im.is_sign_negative() {
            Entry::Real(z.re)
        } else {
            Entry::Complex([z.re, z.im])
        }
    }
}

impl From<Entry> for C64 {
    fn from(e: Entry) -> Self {
        match e {
            Entry::Real(re) => C64::new(re, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

/// Matrix with the JSON layout described in the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct JsonMatrix(pub Matrix);

impl Serialize for JsonMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Entry>> =
            (0..self.0.nrows()).map(|i| (0..self.0.ncols()).map(|j| Entry::from(self.0[(i, j)])).collect()).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for JsonMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<Entry>>::deserialize(d)?;
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != cols) {
            return Err(D::Error::custom(format!("matrix row {i} has {} entries, row 0 has {cols}", rows[i].len())));
        }
        let data: Vec<C64> = rows.iter().flatten().map(|&e| C64::from(e)).collect();
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(D::Error::custom("matrix entries must be finite"));
        }
        Ok(JsonMatrix(Matrix::from_row_slice(rows.len(), cols, &data)))
    }
}

/// Vector as a flat array of entries.
#[derive(Debug, Clone, PartialEq)]
pub struct JsonVector(pub Vector);

impl Serialize for JsonVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.iter().map(|&z| Entry::from(z)).collect::<Vec<_>>().serialize(s)
    }
}

impl<'de> Deserialize<'de> for JsonVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(JsonVector(Vector::from_iterator(entries.len(), entries.into_iter().map(C64::from))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantDoc {
    pub a: JsonMatrix,
    pub b: JsonMatrix,
    pub c: JsonMatrix,
    pub d: JsonMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
}

impl PlantDoc {
    pub fn from_plant(plant: &StateSpace) -> Self {
        PlantDoc {
            a: JsonMatrix(plant.a().clone()),
            b: JsonMatrix(plant.b().clone()),
            c: JsonMatrix(plant.c().clone()),
            d: JsonMatrix(plant.d().clone()),
            labels: plant.labels().cloned(),
        }
    }

    pub fn to_plant(&self) -> Result<StateSpace> {
        let plant = StateSpace::new(self.a.0.clone(), self.b.0.clone(), self.c.0.clone(), self.d.0.clone())?;
        match &self.labels {
            Some(l) => plant.with_labels(l.clone()),
            None => Ok(plant),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExosystemDoc {
    pub frequencies: Vec<f64>,
    /// Defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jordan_sizes: Option<Vec<usize>>,
    pub e: JsonMatrix,
    pub f: JsonMatrix,
}

impl ExosystemDoc {
    pub fn from_exosystem(exo: &Exosystem) -> Self {
        ExosystemDoc {
            frequencies: exo.frequencies().to_vec(),
            jordan_sizes: Some(exo.jordan_sizes().to_vec()),
            e: JsonMatrix(exo.e().clone()),
            f: JsonMatrix(exo.f().clone()),
        }
    }

    pub fn to_exosystem(&self) -> Result<Exosystem> {
        let sizes = self.jordan_sizes.clone().unwrap_or_else(|| vec![1; self.frequencies.len()]);
        Exosystem::from_frequencies(&self.frequencies, &sizes, self.e.0.clone(), self.f.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    pub meta: ControllerMeta,
    pub g1: JsonMatrix,
    pub g2: JsonMatrix,
    pub k: JsonMatrix,
}

impl ControllerDoc {
    pub fn from_controller(ctrl: &Controller) -> Self {
        ControllerDoc {
            meta: ctrl.meta.clone(),
            g1: JsonMatrix(ctrl.g1().clone()),
            g2: JsonMatrix(ctrl.g2().clone()),
            k: JsonMatrix(ctrl.k().clone()),
        }
    }

    pub fn to_controller(&self) -> Result<Controller> {
        Controller::new(self.g1.0.clone(), self.g2.0.clone(), self.k.0.clone(), self.meta.clone())
    }
}

/// Where a plant comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantSource {
    /// Galerkin heat model, pre-stabilized with gain `kappa`.
    Heat {
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
    /// A plant document on disk; relative paths resolve against the config.
    File {
        path: String,
    },
    Inline(PlantDoc),
}

/// Where an exosystem comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExosystemSource {
    /// Reference `(-1, cos(pi t))` with zero disturbance map.
    Heat,
    File {
        path: String,
    },
    Inline(ExosystemDoc),
}

fn default_modes() -> usize {
    HeatModelConfig::default().modes
}
fn default_kappa() -> f64 {
    HeatModelConfig::default().kappa
}
fn default_epsilon_max() -> f64 {
    1.0
}
fn default_refinement() -> usize {
    8
}
fn default_t_final() -> f64 {
    16.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_delta() -> f64 {
    1e-2
}
fn default_samples() -> usize {
    50
}
fn default_seed() -> u64 {
    1
}
fn default_threshold() -> f64 {
    0.05
}

/// A member of a finite perturbation class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassMemberDoc {
    pub plant: PlantDoc,
    pub e: JsonMatrix,
    pub f: JsonMatrix,
}

impl ClassMemberDoc {
    pub fn to_member(&self) -> Result<PerturbedPlant> {
        Ok(PerturbedPlant { plant: self.plant.to_plant()?, e: self.e.0.clone(), f: self.f.0.clone() })
    }
}

/// Family parameters. Unused fields are ignored by families that do not
/// need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignParameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub tune_epsilon: bool,
    #[serde(default = "default_epsilon_max")]
    pub epsilon_max: f64,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    /// `K` with `A + BK` Hurwitz; computed by LQR when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_feedback: Option<JsonMatrix>,
    /// `L` with `A + LC` Hurwitz; computed by LQR when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_injection: Option<JsonMatrix>,
    /// One gain block per frequency replacing the default choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<JsonMatrix>>,
    /// Perturbation class for the reduced families.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class: Vec<ClassMemberDoc>,
}

impl Default for DesignParameters {
    fn default() -> Self {
        DesignParameters {
            epsilon: None,
            tune_epsilon: false,
            epsilon_max: default_epsilon_max(),
            refinement: default_refinement(),
            state_feedback: None,
            output_injection: None,
            gains: None,
            class: Vec::new(),
        }
    }
}

impl DesignParameters {
    pub fn stabilizing_gains(&self) -> StabilizingGains {
        StabilizingGains {
            state_feedback: self.state_feedback.as_ref().map(|m| m.0.clone()),
            output_injection: self.output_injection.as_ref().map(|m| m.0.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Exosystem initial state; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<JsonVector>,
    /// Closed-loop initial state; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<JsonVector>,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings { t_final: default_t_final(), dt: default_dt(), v0: None, x0: None }
    }
}

impl SimulationSettings {
    pub fn v0_for(&self, exo: &Exosystem) -> Vector {
        self.v0.as_ref().map_or_else(|| Vector::from_element(exo.dim(), C64::new(1.0, 0.0)), |v| v.0.clone())
    }

    pub fn x0_for(&self, dim: usize) -> Vector {
        self.x0.as_ref().map_or_else(|| Vector::zeros(dim), |v| v.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSettings {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub targets: PerturbationTargets,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for PerturbationSettings {
    fn default() -> Self {
        PerturbationSettings {
            delta: default_delta(),
            samples: default_samples(),
            seed: default_seed(),
            targets: PerturbationTargets::default(),
            threshold: default_threshold(),
        }
    }
}

impl PerturbationSettings {
    pub fn sweep_config(&self, sim: &SimulationSettings) -> SweepConfig {
        SweepConfig {
            delta: self.delta,
            samples: self.samples,
            seed: self.seed,
            targets: self.targets,
            t_final: sim.t_final,
            dt: sim.dt,
            threshold: self.threshold,
        }
    }
}

/// Run configuration shared by the design, simulate and sweep commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub plant: PlantSource,
    pub exosystem: ExosystemSource,
    pub controller_family: Family,
    #[serde(default)]
    pub parameters: DesignParameters,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub perturbations: PerturbationSettings,
}

/// Builds an in-memory plant from a source that does not refer to a file.
pub fn plant_from_source(source: &PlantSource) -> Result<StateSpace> {
    match source {
        PlantSource::Heat { modes, kappa } => {
            Ok(build_heat_plant(&HeatModelConfig { modes: *modes, kappa: *kappa })?.stabilized)
        }
        PlantSource::Inline(doc) => doc.to_plant(),
        PlantSource::File { path } => {
            Err(Error::Precondition(format!("plant file '{path}' must be loaded by the caller")))
        }
    }
}

/// Builds an exosystem for a plant with `states` states.
pub fn exosystem_from_source(source: &ExosystemSource, states: usize) -> Result<Exosystem> {
    match source {
        ExosystemSource::Heat => benchmark_exosystem(states),
        ExosystemSource::Inline(doc) => doc.to_exosystem(),
        ExosystemSource::File { path } => {
            Err(Error::Precondition(format!("exosystem file '{path}' must be loaded by the caller")))
        }
    }
}

/// Named matrices recorded during a synthesis.
pub type RecordDoc = BTreeMap<String, JsonMatrix>;

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}
