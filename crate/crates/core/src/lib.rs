//! Simulation and analysis of dynamical cooling in the defocusing 2D NLS
//! system: the differential approximation model, a pseudospectral NLS solver,
//! the four-wave interaction kernel and the front/self-similarity toolkit.

pub mod analysis;
pub mod config;
pub mod dam;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod nls;
pub mod snapshot;
pub mod spectrum;

pub use error::*;
pub use grid::{GridSpec, LogFrequencyGrid};
pub use spectrum::{
    energy_spectrum, rj_eval, total_energy, total_waveaction, weighted_profile, ConservedPair,
    RjParams, Spectrum,
};
pub use config::{parse_config, read_config, RunConfig};
pub use dam::{DamConfig, DamRun, DamStatus, InitialCondition, Integrator};
pub use nls::{ComplexField, EnsembleSpectrum, InvariantRow, NlsConfig};
pub use kernel::{KernelValue, Quartet, Region};
