use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "dmem",
    version,
    about = "Dissipative quantum memory experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "parameters", rename_all = "kebab-case")]
pub enum Command {
    /// Mean time to a logical error of the 4D toric code under Toom recovery.
    #[command(name = "toric4d-lifetime")]
    Toric4dLifetime(ToricLifetimeArgs),
    /// One-shot decoding success of the 4D toric code.
    #[command(name = "toric4d-static")]
    Toric4dStatic(ToricStaticArgs),
    /// 2D majority-vote memory lifetimes.
    #[command(name = "toy2d")]
    Toy2d(ToyArgs),
    /// Closed-form thresholds and bounds of the concatenated scheme.
    #[command(name = "concat-bounds")]
    ConcatBounds(ConcatBoundsArgs),
    /// Monte Carlo of level-wise concatenated dissipation.
    #[command(name = "concat-sim")]
    ConcatSim(ConcatSimArgs),
    /// Monte Carlo with a single monolithic recovery jump.
    #[command(name = "concat-singlejump")]
    ConcatSinglejump(SingleJumpArgs),
    /// Numerical check of the damped-ancilla gadget bounds.
    #[command(name = "gadget-verify")]
    GadgetVerify(GadgetArgs),
    /// Re-runs the experiment recorded in a manifest and compares outputs.
    #[command(name = "replay")]
    #[serde(skip)]
    Replay(ReplayArgs),
}

/// Flags shared by every experiment; not part of the recorded parameters.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Directory for the CSV and manifest.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// `key = value` file supplying defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Falls back to DMEM_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Trials {
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseArg {
    Depolarizing,
    Thinned,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ToricLifetimeArgs {
    #[arg(long = "N", alias = "n", value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub gamma_eps: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma_c: f64,
    #[arg(long, default_value_t = 1e5)]
    pub t_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub check_interval: f64,
    /// Sweep cap of the error-corrected readout; defaults to 4N.
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long, value_enum, default_value_t = NoiseArg::Depolarizing)]
    pub noise: NoiseArg,
    /// Track a single observable (0..6) instead of all six.
    #[arg(long)]
    pub observable: Option<usize>,
    #[command(flatten)]
    pub trials: Trials,
    #[command(flatten)]
    #[serde(skip, default = "default_common")]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConventionArg {
    Half,
    Full,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ToricStaticArgs {
    #[arg(long = "N", alias = "n", value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub q: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ConventionArg::Half)]
    pub convention: ConventionArg,
    /// Sweep cap; defaults to 4N.
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[command(flatten)]
    pub trials: Trials,
    #[command(flatten)]
    #[serde(skip, default = "default_common")]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieArg {
    /// A zero magnetization counts as failure.
    TieFails,
    /// Only a strictly negative magnetization fails.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CadenceArg {
    Periodic,
    Continuous,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ToyArgs {
    #[arg(long = "N", alias = "n", value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub gamma_phase: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub gamma_dep: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma_c: f64,
    #[arg(long, default_value_t = 1e7)]
    pub t_max: f64,
    #[arg(long, value_enum, default_value_t = CadenceArg::Periodic)]
    pub cadence: CadenceArg,
    #[arg(long, default_value_t = 1.0)]
    pub check_interval: f64,
    #[arg(long, value_enum, default_value_t = TieArg::TieFails)]
    pub tie: TieArg,
    #[command(flatten)]
    pub trials: Trials,
    #[command(flatten)]
    #[serde(skip, default = "default_common")]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConcatBoundsArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.2)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 8e-4)]
    pub gamma_noise: f64,
    #[arg(
        long = "M",
        alias = "m",
        value_delimiter = ',',
        default_value = "0,1,2,3"
    )]
    pub m: Vec<u32>,
    #[command(flatten)]
    #[serde(skip, default = "default_common")]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConcatSimArgs {
    #[arg(long = "M", alias = "m", value_delimiter = ',', default_value = "1")]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "8e-4")]
    pub gamma_noise: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub delta: f64,
    #[arg(long, default_value_t = 1e5)]
    pub t_max: f64,
    /// Samples for the factorization estimate; defaults to the trial count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Time at which each factorization sample is taken.
    #[arg(long, default_value_t = 200.0)]
    pub t_sample: f64,
    #[command(flatten)]
    pub trials: Trials,
    #[command(flatten)]
    #[serde(skip, default = "default_common")]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SingleJumpArgs {
    #[arg(
        long = "M",
        alias = "m",
        value_delimiter = ',',
        default_value = "0,1,2,3"
    )]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 8e-4)]
    pub gamma_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e6)]
    pub t_max: f64,
    #[command(flatten)]
    pub trials: Trials,
    #[command(flatten)]
    #[serde(skip, default = "default_common")]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpArg {
    /// `Σ |i⟩⟨i+1|`; σ⁻ on a qubit.
    #[value(name = "sigma-minus", alias = "lowering")]
    SigmaMinus,
    /// Complex Gaussian matrix scaled to unit operator norm.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialArg {
    /// Top level of the system.
    Excited,
    Ground,
    /// Uniform superposition of all levels.
    Plus,
    Mixed,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormArg {
    Trace,
    Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LsysArg {
    /// Dephasing when E > 0, nothing otherwise.
    Auto,
    Zero,
    Dephasing,
    Random,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GadgetArgs {
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long = "L", alias = "l", value_enum, default_value_t = JumpArg::SigmaMinus)]
    pub l: JumpArg,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    pub epsilon: Vec<f64>,
    /// System Liouvillian strength: its norm is E ε².
    #[arg(long = "E", alias = "e", default_value_t = 0.0)]
    pub e: f64,
    #[arg(long, value_enum, default_value_t = LsysArg::Auto)]
    pub lsys: LsysArg,
    #[arg(long, default_value_t = 50.0)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Integration steps between written samples.
    #[arg(long, default_value_t = 10)]
    pub sample_every: usize,
    #[arg(long, value_enum, default_value_t = InitialArg::Excited)]
    pub initial: InitialArg,
    #[arg(long, value_enum, default_value_t = NormArg::Trace)]
    pub norm: NormArg,
    /// Seed for random jump operators, states and Liouvillians.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip, default = "default_common")]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Where the replayed outputs go.
    #[arg(long, default_value = "replay")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

fn default_common() -> Common {
    Common {
        out_dir: PathBuf::from("."),
        config: None,
        threads: None,
    }
}

impl Command {
    pub fn common(&self) -> Option<&Common> {
        match self {
            Command::Toric4dLifetime(a) => Some(&a.common),
            Command::Toric4dStatic(a) => Some(&a.common),
            Command::Toy2d(a) => Some(&a.common),
            Command::ConcatBounds(a) => Some(&a.common),
            Command::ConcatSim(a) => Some(&a.common),
            Command::ConcatSinglejump(a) => Some(&a.common),
            Command::GadgetVerify(a) => Some(&a.common),
            Command::Replay(_) => None,
        }
    }

    pub fn common_mut(&mut self) -> Option<&mut Common> {
        match self {
            Command::Toric4dLifetime(a) => Some(&mut a.common),
            Command::Toric4dStatic(a) => Some(&mut a.common),
            Command::Toy2d(a) => Some(&mut a.common),
            Command::ConcatBounds(a) => Some(&mut a.common),
            Command::ConcatSim(a) => Some(&mut a.common),
            Command::ConcatSinglejump(a) => Some(&mut a.common),
            Command::GadgetVerify(a) => Some(&mut a.common),
            Command::Replay(_) => None,
        }
    }

    /// Master seed recorded in the manifest.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Toric4dLifetime(a) => Some(a.trials.seed),
            Command::Toric4dStatic(a) => Some(a.trials.seed),
            Command::Toy2d(a) => Some(a.trials.seed),
            Command::ConcatSim(a) => Some(a.trials.seed),
            Command::ConcatSinglejump(a) => Some(a.trials.seed),
            Command::GadgetVerify(a) => Some(a.seed),
            Command::ConcatBounds(_) | Command::Replay(_) => None,
        }
    }
}
