//! Subcommand implementations.

use std::path::{Path, PathBuf};

use robreg::heat2d::{build_heat_plant, HeatModelConfig};
use robreg::internal_model::{certify_rorp, Certificate};
use robreg::io::{
    to_json, Config, ControllerDoc, DesignParameters, ExosystemDoc, ExosystemSource, PerturbationSettings, PlantDoc,
    PlantSource, SimulationSettings,
};
use robreg::numerics::I;
use robreg::sim::{fit_decay, robustness_sweep, simulate, trajectory_csv, trajectory_svg};
use robreg::sysmodel::{assemble_closed_loop, Controller, Exosystem, Family, StateSpace};
use serde::{Deserialize, Serialize};

use crate::args::{DesignArgs, HeatDemoArgs, SimArgs, SweepArgs, VerifyArgs};
use crate::error::{CliError, CliResult};
use crate::pipeline::{load_controller, load_exosystem, load_plant, synthesize, write_json, write_text, Job};

/// Start from `--config` (or the heat benchmark) and apply flag overrides.
fn job_from_args(args: &DesignArgs) -> CliResult<Job> {
    let mut job = match &args.config {
        Some(path) => Job::load(path)?,
        None => Job {
            config: Config {
                plant: PlantSource::Heat {
                    modes: HeatModelConfig::default().modes,
                    kappa: HeatModelConfig::default().kappa,
                },
                exosystem: ExosystemSource::Heat,
                controller_family: Family::Minimal,
                parameters: DesignParameters::default(),
                simulation: SimulationSettings::default(),
                perturbations: PerturbationSettings::default(),
            },
            base: PathBuf::new(),
        },
    };
    let cfg = &mut job.config;
    let cwd = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf()).to_string_lossy().into_owned();
    match args.plant.as_deref() {
        Some("heat") => {
            if !matches!(cfg.plant, PlantSource::Heat { .. }) {
                cfg.plant = PlantSource::Heat {
                    modes: HeatModelConfig::default().modes,
                    kappa: HeatModelConfig::default().kappa,
                };
            }
        }
        Some(path) => {
            cfg.plant = PlantSource::File { path: cwd(Path::new(path)) };
            if args.exosystem.is_none() && args.config.is_none() {
                return Err(CliError::Usage("--exosystem is required with a plant file".into()));
            }
        }
        None => {}
    }
    if let Some(path) = &args.exosystem {
        cfg.exosystem =
            if path == "heat" { ExosystemSource::Heat } else { ExosystemSource::File { path: cwd(Path::new(path)) } };
    }
    if args.modes.is_some() || args.kappa.is_some() {
        match &mut cfg.plant {
            PlantSource::Heat { modes, kappa } => {
                *modes = args.modes.unwrap_or(*modes);
                *kappa = args.kappa.unwrap_or(*kappa);
            }
            _ => return Err(CliError::Usage("--modes and --kappa apply to the heat plant only".into())),
        }
    }
    if let Some(family) = args.family {
        cfg.controller_family = family;
    }
    if let Some(eps) = args.epsilon {
        cfg.parameters.epsilon = Some(eps);
    }
    if args.tune_epsilon {
        cfg.parameters.tune_epsilon = true;
    }
    Ok(job)
}

struct Problem {
    plant: StateSpace,
    exo: Exosystem,
    controller: Controller,
}

fn problem(job: &Job, controller: Option<&Path>) -> CliResult<Problem> {
    let plant = job.plant()?;
    let exo = job.exosystem(&plant)?;
    let controller = match controller {
        Some(path) => {
            let c = load_controller(path)?;
            c.check_against(&plant)?;
            c
        }
        None => synthesize(&plant, &exo, job.config.controller_family, &job.config.parameters)?.controller,
    };
    Ok(Problem { plant, exo, controller })
}

fn certificate_line(cert: &Certificate) -> String {
    format!(
        "hurwitz {} (abscissa {:.4e}), G-conditions {}, p-copy {}",
        cert.hurwitz, cert.abscissa, cert.g_conditions, cert.p_copy
    )
}

pub fn design(args: &DesignArgs, out: &Path) -> CliResult<()> {
    let job = job_from_args(args)?;
    let plant = job.plant()?;
    let exo = job.exosystem(&plant)?;
    let synthesis = synthesize(&plant, &exo, job.config.controller_family, &job.config.parameters)?;
    let cert = certify_rorp(&plant, &synthesis.controller, &exo)?;
    write_json(&out.join("plant.json"), &PlantDoc::from_plant(&plant))?;
    write_json(&out.join("exosystem.json"), &ExosystemDoc::from_exosystem(&exo))?;
    write_json(&out.join("controller.json"), &ControllerDoc::from_controller(&synthesis.controller))?;
    write_json(&out.join("record.json"), &synthesis.record)?;
    write_json(&out.join("certificate.json"), &cert)?;
    let meta = &synthesis.controller.meta;
    println!("family {}, controller order {}", meta.family.name(), synthesis.controller.order());
    if let Some(eps) = meta.epsilon {
        println!("epsilon {eps}");
    }
    println!("{}", certificate_line(&cert));
    if !cert.pass() {
        return Err(CliError::Failed("controller does not pass the robust regulation certificate".into()));
    }
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> CliResult<()> {
    let plant = load_plant(&args.plant)?;
    let exo = load_exosystem(&args.exosystem)?;
    let ctrl = load_controller(&args.controller)?;
    ctrl.check_against(&plant)?;
    let cert = certify_rorp(&plant, &ctrl, &exo)?;
    match &args.out {
        Some(path) => write_json(path, &cert)?,
        None => print!("{}", to_json(&cert)),
    }
    eprintln!("{}", certificate_line(&cert));
    if !cert.g_report.g2_injective {
        eprintln!("G2 is not injective");
    }
    for (f, p) in cert.g_report.frequencies.iter().zip(&cert.p_copy_report.frequencies) {
        if !f.range_intersection || !f.kernel_in_range || !p.pass {
            eprintln!(
                "omega {}: range condition {}, kernel condition {}, {} chains of required length",
                f.omega, f.range_intersection, f.kernel_in_range, p.chains
            );
        }
    }
    if !cert.pass() {
        return Err(CliError::Failed("verification failed".into()));
    }
    Ok(())
}

/// Simulation summary written next to the trajectory files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub controller_order: usize,
    pub abscissa: f64,
    pub hurwitz: bool,
    pub t_final: f64,
    pub dt: f64,
    /// Largest `|e_i(t)|` over the last quarter of the horizon.
    pub terminal_errors: Vec<f64>,
    /// Least-squares decay rate of `|e(t)|` over the second half; absent when
    /// the error is identically zero.
    pub decay_rate: Option<f64>,
    pub decay_r_squared: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Simulates from `x_e0` and `v0`, writing CSV, SVG and summary into `out`.
/// A non-Hurwitz loop is reported without simulating.
fn run_simulation(p: &Problem, sim: &SimulationSettings, out: &Path) -> CliResult<Summary> {
    let cl = assemble_closed_loop(&p.plant, &p.controller, &p.exo)?;
    let abscissa = cl.spectral_abscissa()?;
    let mut summary = Summary {
        family: p.controller.meta.family,
        epsilon: p.controller.meta.epsilon,
        controller_order: p.controller.order(),
        abscissa,
        hurwitz: abscissa < 0.0,
        t_final: sim.t_final,
        dt: sim.dt,
        terminal_errors: Vec::new(),
        decay_rate: None,
        decay_r_squared: None,
    };
    if !summary.hurwitz {
        write_json(&out.join("summary.json"), &summary)?;
        return Ok(summary);
    }
    let x0 = sim.x0_for(cl.dim());
    let v0 = sim.v0_for(&p.exo);
    let result = simulate(&cl, &p.exo, &x0, &v0, sim.t_final, sim.dt)?;
    let fit = fit_decay(&result, sim.t_final / 2.0, sim.t_final)?;
    summary.terminal_errors = result.terminal_errors();
    summary.decay_rate = finite(fit.rate);
    summary.decay_r_squared = finite(fit.r_squared).filter(|_| fit.rate.is_finite());
    write_text(&out.join("trajectory.csv"), &trajectory_csv(&result))?;
    write_text(&out.join("trajectory.svg"), &trajectory_svg(&result))?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn report_summary(s: &Summary) -> CliResult<()> {
    println!("family {}, controller order {}", s.family.name(), s.controller_order);
    println!("closed-loop spectral abscissa {:.4e}", s.abscissa);
    if !s.hurwitz {
        return Err(CliError::Failed(format!("closed loop is not exponentially stable (abscissa {:.4e})", s.abscissa)));
    }
    let errs: Vec<String> = s.terminal_errors.iter().map(|e| format!("{e:.4e}")).collect();
    println!("terminal errors on [{}, {}]: {}", 0.75 * s.t_final, s.t_final, errs.join(", "));
    match s.decay_rate {
        Some(rate) => println!("fitted decay rate {rate:.4}"),
        None => println!("regulation error vanishes identically"),
    }
    Ok(())
}

pub fn simulate_cmd(args: &SimArgs, out: &Path) -> CliResult<()> {
    let mut job = job_from_args(&args.design)?;
    if let Some(t) = args.tfinal {
        job.config.simulation.t_final = t;
    }
    if let Some(dt) = args.dt {
        job.config.simulation.dt = dt;
    }
    let p = problem(&job, args.controller.as_deref())?;
    let summary = run_simulation(&p, &job.config.simulation, out)?;
    report_summary(&summary)
}

pub fn sweep(args: &SweepArgs, out: &Path) -> CliResult<()> {
    let mut job = job_from_args(&args.sim.design)?;
    let cfg = &mut job.config;
    if let Some(t) = args.sim.tfinal {
        cfg.simulation.t_final = t;
    }
    if let Some(dt) = args.sim.dt {
        cfg.simulation.dt = dt;
    }
    if let Some(d) = args.delta {
        cfg.perturbations.delta = d;
    }
    if let Some(n) = args.samples {
        cfg.perturbations.samples = n;
    }
    if let Some(s) = args.seed {
        cfg.perturbations.seed = s;
    }
    if let Some(t) = args.threshold {
        cfg.perturbations.threshold = t;
    }
    let p = problem(&job, args.sim.controller.as_deref())?;
    let sweep_cfg = job.config.perturbations.sweep_config(&job.config.simulation);
    let v0 = job.config.simulation.v0_for(&p.exo);
    let report = robustness_sweep(&p.plant, &p.controller, &p.exo, &v0, &sweep_cfg)?;
    write_json(&out.join("sweep.json"), &report)?;
    println!(
        "{} samples at delta {}: {} Hurwitz, {} tracking, {} outside the stable class",
        report.samples.len(),
        sweep_cfg.delta,
        report.hurwitz,
        report.tracking,
        report.out_of_class
    );
    if !report.pass() {
        return Err(CliError::Failed(format!("{} stable samples fail to track", report.failures)));
    }
    Ok(())
}

fn print_modes_check(modes: usize, check: usize, kappa: f64, exo: &Exosystem) -> CliResult<()> {
    let coarse = build_heat_plant(&HeatModelConfig { modes, kappa })?.stabilized;
    let fine = build_heat_plant(&HeatModelConfig { modes: check, kappa })?.stabilized;
    println!(
        "{:>10} {:>14} {:>14} {:>12}",
        "omega",
        format!("|P_{modes}|"),
        format!("|P_{modes}-P_{check}|"),
        "relative"
    );
    for &w in exo.frequencies() {
        let pc = coarse.transfer(I * w)?;
        let diff = (&pc - fine.transfer(I * w)?).norm();
        println!("{:>10.5} {:>14.6e} {:>14.6e} {:>12.4e}", w, pc.norm(), diff, diff / pc.norm());
    }
    Ok(())
}

pub fn heat_demo(args: &HeatDemoArgs, out: &Path) -> CliResult<()> {
    let heat = HeatModelConfig { modes: args.modes, kappa: args.kappa };
    let plant = build_heat_plant(&heat)?.stabilized;
    let exo = robreg::heat2d::benchmark_exosystem(plant.states())?;
    if let Some(check) = args.modes_check {
        print_modes_check(args.modes, check, args.kappa, &exo)?;
    }
    let controller =
        robreg::minimal::minimal_controller(&plant, &exo, args.epsilon, &robreg::minimal::GainChoice::Pseudoinverse)?;
    let sim = SimulationSettings { t_final: args.tfinal, dt: args.dt, v0: None, x0: None };
    let summary = run_simulation(&Problem { plant, exo, controller }, &sim, out)?;
    report_summary(&summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use robreg::io::RecordDoc;
    use robreg::sim::SweepReport;
    use tempfile::TempDir;

    fn reserialized<T: Serialize + serde::de::DeserializeOwned>(text: &str) -> String {
        to_json(&serde_json::from_str::<T>(text).unwrap())
    }

    #[test]
    fn outputs_reserialize_identically() {
        let tmp = TempDir::new().unwrap();
        let args = HeatDemoArgs { modes: 4, kappa: 1.0, epsilon: 0.25, tfinal: 2.0, dt: 0.05, modes_check: None };
        heat_demo(&args, tmp.path()).unwrap();
        let summary = std::fs::read_to_string(tmp.path().join("summary.json")).unwrap();
        assert_eq!(reserialized::<Summary>(&summary), summary);

        let design_args = DesignArgs {
            config: None,
            plant: Some("heat".into()),
            exosystem: None,
            family: Some(Family::Observer),
            epsilon: None,
            tune_epsilon: false,
            modes: Some(3),
            kappa: None,
        };
        design(&design_args, tmp.path()).unwrap();
        let record = std::fs::read_to_string(tmp.path().join("record.json")).unwrap();
        assert_eq!(reserialized::<RecordDoc>(&record), record);
        let cert = std::fs::read_to_string(tmp.path().join("certificate.json")).unwrap();
        assert_eq!(reserialized::<Certificate>(&cert), cert);

        let sweep_args = SweepArgs {
            sim: SimArgs { design: design_args, controller: None, tfinal: Some(2.0), dt: Some(0.05) },
            delta: Some(0.0),
            samples: Some(2),
            seed: Some(3),
            threshold: Some(10.0),
        };
        sweep(&sweep_args, tmp.path()).unwrap();
        let report = std::fs::read_to_string(tmp.path().join("sweep.json")).unwrap();
        assert_eq!(reserialized::<SweepReport>(&report), report);
    }

    #[test]
    fn summary_without_decay_rate() {
        let s = Summary {
            family: Family::Minimal,
            epsilon: None,
            controller_order: 1,
            abscissa: -0.5,
            hurwitz: true,
            t_final: 1.0,
            dt: 0.1,
            terminal_errors: vec![0.0],
            decay_rate: None,
            decay_r_squared: None,
        };
        let text = to_json(&s);
        assert!(text.contains("\"decay_rate\": null"));
        assert_eq!(serde_json::from_str::<Summary>(&text).unwrap(), s);
    }
}
