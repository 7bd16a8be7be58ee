//! File loading, configuration resolution and controller synthesis.

use std::fs;
use std::path::{Path, PathBuf};

use robreg::io::{
    exosystem_from_source, plant_from_source, to_json, Config, DesignParameters, ExosystemDoc, ExosystemSource,
    JsonMatrix, PlantDoc, PlantSource, RecordDoc,
};
use robreg::minimal::{
    minimal_controller, minimal_controller_real, reduced_order_minimal_controller, rescale_epsilon, tune_epsilon_for,
    GainChoice, PerturbedPlant,
};
use robreg::numerics::Matrix;
use robreg::observer::{observer_controller, observer_controller_diag, ObserverRecord};
use robreg::sysmodel::{Controller, Exosystem, Family, StateSpace};
use robreg::triangular::{
    triangular_controller, triangular_controller_diag, triangular_controller_reduced, TriangularRecord,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text, path)
}

/// Parses `text`, reporting the field path and line/column on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> CliResult<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let message = if field == "." { e.inner().to_string() } else { format!("at '{field}': {}", e.inner()) };
        CliError::Parse { path: path.to_path_buf(), message }
    })?;
    de.end().map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(value)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_json(value))
}

pub fn load_plant(path: &Path) -> CliResult<StateSpace> {
    Ok(read_json::<PlantDoc>(path)?.to_plant()?)
}

pub fn load_exosystem(path: &Path) -> CliResult<Exosystem> {
    Ok(read_json::<ExosystemDoc>(path)?.to_exosystem()?)
}

pub fn load_controller(path: &Path) -> CliResult<Controller> {
    Ok(read_json::<robreg::io::ControllerDoc>(path)?.to_controller()?)
}

/// A configuration together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: Config,
    pub base: PathBuf,
}

impl Job {
    pub fn load(path: &Path) -> CliResult<Self> {
        let config = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Job { config, base })
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn plant(&self) -> CliResult<StateSpace> {
        match &self.config.plant {
            PlantSource::File { path } => load_plant(&self.resolve(path)),
            other => Ok(plant_from_source(other)?),
        }
    }

    pub fn exosystem(&self, plant: &StateSpace) -> CliResult<Exosystem> {
        match &self.config.exosystem {
            ExosystemSource::File { path } => load_exosystem(&self.resolve(path)),
            other => Ok(exosystem_from_source(other, plant.states())?),
        }
    }
}

/// A synthesized controller and the named intermediate matrices.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub controller: Controller,
    pub record: RecordDoc,
}

fn record(entries: Vec<(&str, Matrix)>) -> RecordDoc {
    entries.into_iter().map(|(k, m)| (k.to_string(), JsonMatrix(m))).collect()
}

fn triangular_record(r: TriangularRecord) -> RecordDoc {
    record(vec![
        ("g1", r.g1),
        ("k1", r.k1),
        ("k2", r.k2),
        ("l1", r.l1),
        ("h", r.h),
        ("c1", r.c1),
        ("g2", r.g2),
        ("l", r.l),
    ])
}

fn observer_record(r: ObserverRecord) -> RecordDoc {
    record(vec![
        ("g1", r.g1),
        ("g2", r.g2),
        ("h", r.h),
        ("b1", r.b1),
        ("k1", r.k1),
        ("k21", r.k21),
        ("k2", r.k2),
        ("l", r.l),
    ])
}

fn gain_choice(params: &DesignParameters) -> GainChoice {
    match &params.gains {
        Some(blocks) => GainChoice::Custom(blocks.iter().map(|b| b.0.clone()).collect()),
        None => GainChoice::Pseudoinverse,
    }
}

/// Uses the given `epsilon`, or tunes one when it is absent or tuning is
/// requested. `build` must return a controller whose `K` is linear in `eps`.
fn low_gain(
    plant: &StateSpace,
    exo: &Exosystem,
    params: &DesignParameters,
    build: impl Fn(f64) -> robreg::Result<Controller>,
) -> robreg::Result<Controller> {
    match params.epsilon {
        Some(eps) if !params.tune_epsilon => build(eps),
        _ => {
            let base = build(1.0)?;
            let eps = tune_epsilon_for(plant, exo, &base, params.epsilon_max, params.refinement)?;
            let mut ctrl = rescale_epsilon(&base, eps)?;
            ctrl.meta.parameters.insert("epsilon_max".into(), params.epsilon_max);
            ctrl.meta.parameters.insert("tuned".into(), 1.0);
            Ok(ctrl)
        }
    }
}

pub fn synthesize(
    plant: &StateSpace,
    exo: &Exosystem,
    family: Family,
    params: &DesignParameters,
) -> robreg::Result<Synthesis> {
    let gains = params.stabilizing_gains();
    let class = || params.class.iter().map(|m| m.to_member()).collect::<robreg::Result<Vec<PerturbedPlant>>>();
    let plain = |controller| Synthesis { controller, record: RecordDoc::new() };
    Ok(match family {
        Family::Minimal => {
            let choice = gain_choice(params);
            plain(low_gain(plant, exo, params, |eps| minimal_controller(plant, exo, eps, &choice))?)
        }
        Family::MinimalReal => plain(low_gain(plant, exo, params, |eps| minimal_controller_real(plant, exo, eps))?),
        Family::MinimalReduced => {
            let class = class()?;
            plain(low_gain(plant, exo, params, |eps| reduced_order_minimal_controller(plant, exo, &class, eps))?)
        }
        Family::Triangular => {
            let d = triangular_controller(plant, exo, &gains, &gain_choice(params))?;
            Synthesis { controller: d.controller, record: triangular_record(d.record) }
        }
        Family::TriangularDiag => {
            let d = triangular_controller_diag(plant, exo, &gains, &gain_choice(params))?;
            Synthesis { controller: d.controller, record: triangular_record(d.record) }
        }
        Family::TriangularReduced => {
            let d = triangular_controller_reduced(plant, exo, &class()?, &gains)?;
            Synthesis { controller: d.controller, record: triangular_record(d.record) }
        }
        Family::Observer => {
            let d = observer_controller(plant, exo, &gains, &gain_choice(params))?;
            Synthesis { controller: d.controller, record: observer_record(d.record) }
        }
        Family::ObserverDiag => {
            let d = observer_controller_diag(plant, exo, &gains, &gain_choice(params))?;
            Synthesis { controller: d.controller, record: observer_record(d.record) }
        }
        Family::Custom => {
            return Err(robreg::Error::Precondition("the custom family is loaded from a file, not synthesized".into()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use robreg::io::ExosystemSource;
    use robreg::numerics::real_matrix;

    fn scalar_job(family: Family) -> Job {
        let plant = StateSpace::new(
            real_matrix(1, 1, &[-1.0]),
            real_matrix(1, 1, &[1.0]),
            real_matrix(1, 1, &[1.0]),
            real_matrix(1, 1, &[0.0]),
        )
        .unwrap();
        let exo = Exosystem::from_frequencies(&[0.0], &[1], Matrix::zeros(1, 1), real_matrix(1, 1, &[-1.0])).unwrap();
        Job {
            config: Config {
                plant: PlantSource::Inline(PlantDoc::from_plant(&plant)),
                exosystem: ExosystemSource::Inline(ExosystemDoc::from_exosystem(&exo)),
                controller_family: family,
                parameters: DesignParameters::default(),
                simulation: Default::default(),
                perturbations: Default::default(),
            },
            base: PathBuf::new(),
        }
    }

    #[test]
    fn every_family_designs_the_scalar_plant() {
        for family in [
            Family::Minimal,
            Family::MinimalReal,
            Family::Triangular,
            Family::TriangularDiag,
            Family::Observer,
            Family::ObserverDiag,
        ] {
            let job = scalar_job(family);
            let plant = job.plant().unwrap();
            let exo = job.exosystem(&plant).unwrap();
            let s = synthesize(&plant, &exo, family, &job.config.parameters).unwrap();
            assert_eq!(s.controller.meta.family, family);
            let cert = robreg::internal_model::certify_rorp(&plant, &s.controller, &exo).unwrap();
            assert!(cert.pass(), "{family:?}");
        }
    }

    #[test]
    fn missing_epsilon_is_tuned() {
        let job = scalar_job(Family::Minimal);
        let plant = job.plant().unwrap();
        let exo = job.exosystem(&plant).unwrap();
        let s = synthesize(&plant, &exo, Family::Minimal, &job.config.parameters).unwrap();
        assert!(s.controller.meta.epsilon.unwrap() > 0.0);
        assert_eq!(s.controller.meta.parameters.get("tuned"), Some(&1.0));
    }

    #[test]
    fn custom_family_is_rejected() {
        let job = scalar_job(Family::Custom);
        let plant = job.plant().unwrap();
        let exo = job.exosystem(&plant).unwrap();
        let err = synthesize(&plant, &exo, Family::Custom, &job.config.parameters).unwrap_err();
        assert_eq!(err.kind(), robreg::ErrorKind::Precondition);
    }

    #[test]
    fn parse_errors_name_the_field() {
        let err = parse_json::<PlantDoc>(r#"{"a": [[1]], "b": [[1]], "c": [["x"]], "d": [[0]]}"#, Path::new("p.json"))
            .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("c"), "{text}");
        assert!(text.contains("line 1"), "{text}");
        assert_eq!(err.exit_code(), 1);
    }
}
