use std::path::PathBuf;

use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    #[value(name = "sweep-L")]
    SweepL,
    Cycles,
    Web,
    Branches,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::SweepL => "sweep-L",
            Command::Cycles => "cycles",
            Command::Web => "web",
            Command::Branches => "branches",
            Command::All => "all",
        }
    }
}

#[derive(Clone, Debug, Parser)]
#[command(name = "holoweb", version, about = "Stability, cycle motions and inverse branches for holomorphic families on P^k")]
pub struct RunConfig {
    /// Family specification (TOML).
    #[arg(long)]
    pub spec: PathBuf,

    #[arg(long, value_enum)]
    pub cmd: Command,

    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Master seed for every stochastic step.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Nodes per real axis of the parameter mesh (overrides the spec).
    #[arg(long)]
    pub mesh: Option<usize>,

    /// Pullback depth for sweeps and references; backward-orbit depth for
    /// `branches`.
    #[arg(long)]
    pub depth: Option<usize>,

    /// Cycle period for `cycles`, web level for `web`.
    #[arg(long, default_value_t = 4)]
    pub period: usize,

    /// Monte Carlo budget: backward orbits for the Kingman estimate.
    #[arg(long, default_value_t = 32)]
    pub budget: usize,

    /// Stencil threshold override for `sweep-L`.
    #[arg(long)]
    pub theta: Option<f64>,

    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}
