//! Command-line orchestration for wavecool: solver runs with reproducibility
//! manifests, kernel scans, analysis reports and figure recipes.
//!
//! Run directory layout (`--out`):
//!
//! ```text
//! config.cfg             the configuration exactly as read (hashed in the manifest)
//! manifest.json          tool version, config hash, seeds, wall times, status, outputs
//! snapshots/             snapshot_*.csv (omega,N) + snapshot_*.json sidecars
//! conserved.csv          DAM only: t,N,E
//! fluxes/                DAM only: fluxes_<t>.csv (omega,K,Q,P)
//! invariants.csv         NLS only: t,waveaction,quad_energy,hamiltonian,dissipated
//! spectra/               NLS only: ensemble_*.csv (omega,N,modes; empty N = no mode)
//! checkpoints/           NLS only: member_<id>.ckpt at the latest output time
//! ```

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wavecool_core::{AnalysisError, ConfigError, DamError, KernelError, NlsError, SnapshotError};

pub mod analyze;
pub mod kernel_cmd;
pub mod manifest;
pub mod reproduce;
pub mod runs;

#[derive(Debug, Parser)]
#[command(name = "wavecool", version, about = "Dynamical cooling of 2D NLS wave turbulence: DAM and NLS solvers with front and self-similarity analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Differential approximation model
    #[command(subcommand)]
    Dam(DamCommand),
    /// Pseudospectral 2D NLS ensemble
    #[command(subcommand)]
    Nls(NlsCommand),
    /// Four-wave interaction kernel
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Reports computed from a run directory
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Print (or execute with --run) the commands behind a figure
    Reproduce(ReproduceArgs),
    /// Print a built-in configuration preset
    Preset {
        /// dam-desk, dam-deep, nls-desk or nls-paper; omit to list them
        name: Option<String>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ConfigSource {
    /// Configuration file (flat `key = value`, `#` comments)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in preset name instead of a file
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum DamCommand {
    /// Integrate the DAM and write snapshots, conserved totals and fluxes
    Run {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
        /// Which snapshots also get a flux table
        #[arg(long, value_enum, default_value_t = FluxOutput::All)]
        fluxes: FluxOutput,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FluxOutput {
    All,
    Final,
    None,
}

#[derive(Debug, Subcommand)]
pub enum NlsCommand {
    /// Evolve the ensemble and write spectra, invariants and checkpoints
    Run {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint file, or a directory of member_<id>.ckpt files
        #[arg(long)]
        resume: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum KernelCommand {
    /// Per-region convergence verdicts over a sweep of power-law slopes x
    Scan {
        #[arg(long, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        x_max: f64,
        #[arg(long)]
        step: f64,
        /// CSV columns: x,region,measured,predicted,r_squared,identically_zero,convergent
        /// (region `all` carries the overall verdict)
        #[arg(long)]
        out: PathBuf,
    },
    /// Print S1, q, K(q) and S for one resonant quartet
    Eval {
        /// omega,omega1,omega2 (omega3 follows from resonance)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        quartet: Vec<f64>,
    },
}

#[derive(Debug, Args, Clone)]
pub struct AnalyzeInput {
    /// Run directory written by `dam run` or `nls run`
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fit window in t as `lo,hi` (default: the last decade; two for exponents)
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub window: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Columns: t,omega_hat_minus,omega_hat_plus,omega_minus,omega_plus (empty = no front)
    Fronts {
        #[command(flatten)]
        io: AnalyzeInput,
        #[arg(long, default_value_t = 0.4)]
        sigma: f64,
        #[arg(long, default_value_t = 0.4)]
        sigma_tilde: f64,
        /// Relative level defining the absolute fronts omega_-/omega_+
        #[arg(long, default_value_t = 1e-8)]
        floor: f64,
    },
    /// Columns: t,T,mu,T_hat,mu_hat,omega_hat_plus (peak and conservation estimators)
    Rj {
        #[command(flatten)]
        io: AnalyzeInput,
        #[arg(long, default_value_t = 0.4)]
        sigma: f64,
    },
    /// Report columns: g,law,rate,prefactor,residual,window_lo,window_hi,points,predicted.
    /// The series goes to <out stem>_series.csv: g,t,W,argmax
    Wg {
        #[command(flatten)]
        io: AnalyzeInput,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        g: Vec<f64>,
        /// Nodes with N at or below this fraction of max N are excluded
        /// (default: 0 for g > 1/2, whose norm lives on the UV tail; 1e-8 otherwise)
        #[arg(long)]
        support: Option<f64>,
    },
    /// Report columns: g,speed,predicted,collapse_error,profiles,tau_span.
    /// Shifts go to <out stem>_series.csv: t,tau,shift
    Collapse {
        #[command(flatten)]
        io: AnalyzeInput,
        #[arg(long, allow_hyphen_values = true)]
        g: f64,
        /// Same default as for `wg`
        #[arg(long)]
        support: Option<f64>,
    },
    /// Columns: window_lo,window_hi,b,temperature_exponent,a,consistency,cooling_rate
    Exponents {
        #[command(flatten)]
        io: AnalyzeInput,
        #[arg(long, default_value_t = 0.4)]
        sigma: f64,
    },
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// fig1 ... fig9, or fig2a (the sigma = 0.2 variant of fig2)
    pub figure: String,
    /// Execute the plan instead of printing it
    #[arg(long)]
    pub run: bool,
    /// Base directory for run and report outputs
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Outputs were written, but a DAM front reached the grid boundary.
    BoundaryReached,
}

/// Invalid command-line usage detected after parsing (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn execute(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Dam(DamCommand::Run { source, out, fluxes }) => runs::dam_run(source, out, *fluxes),
        Command::Nls(NlsCommand::Run { source, out, resume }) => {
            runs::nls_run(source, out, resume.as_deref())
        }
        Command::Kernel(KernelCommand::Scan {
            x_min,
            x_max,
            step,
            out,
        }) => kernel_cmd::scan(*x_min, *x_max, *step, out),
        Command::Kernel(KernelCommand::Eval { quartet }) => kernel_cmd::eval(quartet),
        Command::Analyze(cmd) => analyze::run(cmd),
        Command::Reproduce(args) => reproduce::reproduce(args),
        Command::Preset { name } => {
            match name {
                None => {
                    for (n, _) in wavecool_core::config::PRESETS {
                        println!("{n}");
                    }
                }
                Some(n) => {
                    let text = wavecool_core::config::preset(n)
                        .ok_or_else(|| UsageError(format!("unknown preset `{n}`")))?;
                    print!("{text}");
                }
            }
            Ok(Outcome::Success)
        }
    }
}

/// Exit status for a failed command: 2 for invalid input, 3 for numerical
/// failure, 1 for anything else (I/O).
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<DamError>() {
            return match e {
                DamError::Config { .. } | DamError::Grid(_) | DamError::Spectrum(_) => 2,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<NlsError>() {
            return match e {
                NlsError::BlowUp { .. } => 3,
                NlsError::Checkpoint(_) => 1,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            return match e {
                AnalysisError::InvalidArgument(_) | AnalysisError::DynamicRange { .. } => 2,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<KernelError>() {
            return match e {
                KernelError::FitFailure { .. } | KernelError::NoPlateau { .. } => 3,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<SnapshotError>() {
            return match e {
                SnapshotError::Io { .. } => 1,
                _ => 2,
            };
        }
    }
    1
}
