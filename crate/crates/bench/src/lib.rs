//! Shared fixtures for the criterion benchmarks.

use wavecool_core::nls::{init_random_phase, ComplexField};
use wavecool_core::{DamConfig, NlsConfig, Spectrum};

/// Initial Gaussian spectrum of the desk DAM preset, raised to the vacuum
/// floor as the solver does before its first step.
pub fn dam_desk_spectrum() -> Spectrum {
    let cfg = DamConfig::desk();
    let s = cfg.initial_spectrum().expect("desk preset is valid");
    let values = s.values().iter().map(|v| v.max(cfg.floor_fraction)).collect();
    Spectrum::new(s.grid().clone(), values, 0.0).expect("floored values are positive")
}

/// Desk NLS configuration at resolution `n`, inviscid.
pub fn nls_config(n: usize) -> NlsConfig {
    NlsConfig {
        resolution: n,
        k0: (n / 16) as f64,
        nu: 0.0,
        ..NlsConfig::desk()
    }
}

/// Random-phase initial field at resolution `n`.
pub fn nls_field(n: usize) -> ComplexField {
    init_random_phase(&nls_config(n), 7).expect("valid config")
}
