use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use robreg::sysmodel::Family;

#[derive(Debug, Parser)]
#[command(name = "robreg", version, about = "Robust output regulation: controller design, verification and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a controller and certify it.
    Design {
        #[command(flatten)]
        design: DesignArgs,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check a controller against a plant and exosystem.
    Verify(VerifyArgs),
    /// Simulate the closed loop and write trajectories.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Simulate seeded random perturbations of the plant and exosystem.
    Sweep {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Two-dimensional heat equation tracking benchmark.
    HeatDemo {
        #[command(flatten)]
        demo: HeatDemoArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: robreg::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// JSON run configuration; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `heat` or a plant JSON file.
    #[arg(long)]
    pub plant: Option<String>,
    /// `heat` or an exosystem JSON file.
    #[arg(long)]
    pub exosystem: Option<String>,
    /// minimal, minimal-real, minimal-reduced, triangular, triangular-diag,
    /// triangular-reduced, observer or observer-diag.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<Family>,
    /// Low-gain parameter of the minimal families.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Search for the largest stabilizing epsilon.
    #[arg(long)]
    pub tune_epsilon: bool,
    /// Heat model modes per axis.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Heat model output-feedback gain.
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub plant: PathBuf,
    #[arg(long)]
    pub controller: PathBuf,
    #[arg(long)]
    pub exosystem: PathBuf,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Use this controller instead of synthesizing one.
    #[arg(long)]
    pub controller: Option<PathBuf>,
    #[arg(long)]
    pub tfinal: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Relative perturbation size.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest admissible terminal error.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct HeatDemoArgs {
    #[arg(long, default_value_t = 10)]
    pub modes: usize,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.25)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 16.0)]
    pub tfinal: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Also print the change of the transfer values against this truncation.
    #[arg(long)]
    pub modes_check: Option<usize>,
}
