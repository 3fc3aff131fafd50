//! Wave action spectra on a [`LogFrequencyGrid`], the Rayleigh-Jeans family
//! and the two quadratic invariants.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::SpectrumError;
use crate::grid::LogFrequencyGrid;

/// Temperature and chemical potential of a Rayleigh-Jeans spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RjParams {
    pub temperature: f64,
    pub chemical_potential: f64,
}

impl RjParams {
    pub fn new(temperature: f64, chemical_potential: f64) -> Result<Self, SpectrumError> {
        if temperature > 0.0
            && chemical_potential > 0.0
            && temperature.is_finite()
            && chemical_potential.is_finite()
        {
            Ok(Self {
                temperature,
                chemical_potential,
            })
        } else {
            Err(SpectrumError::InvalidRj {
                temperature,
                chemical_potential,
            })
        }
    }
}

/// `N = T / (mu + omega)`.
pub fn rj_eval(params: RjParams, omega: f64) -> f64 {
    params.temperature / (params.chemical_potential + omega)
}

/// Total wave action and quadratic energy of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedPair {
    pub waveaction: f64,
    pub energy: f64,
}

impl ConservedPair {
    /// Mean frequency `E / N`.
    pub fn mean_frequency(&self) -> f64 {
        self.energy / self.waveaction
    }
}

/// Immutable snapshot of the wave action density `N_omega` at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Arc<LogFrequencyGrid>,
    values: Vec<f64>,
    time: f64,
}

impl Spectrum {
    pub fn new(
        grid: Arc<LogFrequencyGrid>,
        values: Vec<f64>,
        time: f64,
    ) -> Result<Self, SpectrumError> {
        if values.len() != grid.len() {
            return Err(SpectrumError::LengthMismatch {
                values: values.len(),
                nodes: grid.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(SpectrumError::InvalidValue { index, value });
        }
        Ok(Self { grid, values, time })
    }

    /// Samples `f(omega)` on every node.
    pub fn from_fn(
        grid: Arc<LogFrequencyGrid>,
        time: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, SpectrumError> {
        let values = grid.nodes().iter().map(|&w| f(w)).collect();
        Self::new(grid, values, time)
    }

    pub fn rayleigh_jeans(
        grid: Arc<LogFrequencyGrid>,
        params: RjParams,
        time: f64,
    ) -> Result<Self, SpectrumError> {
        Self::from_fn(grid, time, |w| rj_eval(params, w))
    }

    pub fn grid(&self) -> &Arc<LogFrequencyGrid> {
        &self.grid
    }

    pub fn omega(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn total_waveaction(&self) -> f64 {
        total_waveaction(self)
    }

    pub fn total_energy(&self) -> f64 {
        total_energy(self)
    }

    pub fn conserved(&self) -> ConservedPair {
        ConservedPair {
            waveaction: total_waveaction(self),
            energy: total_energy(self),
        }
    }

    /// Value at an arbitrary frequency: linear in `(ln omega, ln N)` between
    /// positive neighbours, linear in `omega` otherwise, zero outside the grid.
    pub fn interpolate(&self, omega: f64) -> f64 {
        let Some(i) = self.grid.bracket(omega) else {
            return 0.0;
        };
        let w = self.grid.nodes();
        let (a, b) = (self.values[i], self.values[i + 1]);
        if a > 0.0 && b > 0.0 {
            let l = self.grid.log_nodes();
            let s = (omega.ln() - l[i]) / (l[i + 1] - l[i]);
            (a.ln() + s * (b.ln() - a.ln())).exp()
        } else {
            let s = (omega - w[i]) / (w[i + 1] - w[i]);
            a + s * (b - a)
        }
    }
}

fn trapezoid(omega: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut prev = f(0);
    for i in 1..omega.len() {
        let cur = f(i);
        acc += 0.5 * (omega[i] - omega[i - 1]) * (prev + cur);
        prev = cur;
    }
    acc
}

/// Trapezoidal estimate of `integral N_omega d omega` over the grid.
pub fn total_waveaction(s: &Spectrum) -> f64 {
    let n = s.values();
    trapezoid(s.omega(), |i| n[i])
}

/// Trapezoidal estimate of `integral omega N_omega d omega` over the grid.
pub fn total_energy(s: &Spectrum) -> f64 {
    let (w, n) = (s.omega(), s.values());
    trapezoid(w, |i| w[i] * n[i])
}

/// Quadratic energy density `E_omega = omega N_omega`.
pub fn energy_spectrum(s: &Spectrum) -> Vec<f64> {
    s.omega()
        .iter()
        .zip(s.values())
        .map(|(w, n)| w * n)
        .collect()
}

/// Weighted profile `W_g = omega^(g + 1/2) N_omega`; `g = 0` gives the
/// symmetric profile whose maximum locates the chemical potential.
pub fn weighted_profile(s: &Spectrum, g: f64) -> Vec<f64> {
    let p = g + 0.5;
    if p == 0.0 {
        return s.values().to_vec();
    }
    s.grid()
        .log_nodes()
        .iter()
        .zip(s.values())
        .map(|(l, n)| (p * l).exp() * n)
        .collect()
}
