//! Logarithmically spaced frequency axis shared by the DAM solver and the
//! analysis toolkit.

use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// Minimum number of nodes a grid may carry.
pub const MIN_POINTS: usize = 8;

/// Frequency nodes `omega_i = omega_min * exp(i * step)`, uniform in `ln omega`.
///
/// Both `omega` and `ln omega` are stored so hot loops never call `exp`/`ln`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFrequencyGrid {
    omega_min: f64,
    omega_max: f64,
    log_step: f64,
    nodes: Vec<f64>,
    log_nodes: Vec<f64>,
}

/// Serializable description of a grid (what the snapshot sidecar stores).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
}

impl LogFrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, n_points: usize) -> Result<Self, GridError> {
        if !(omega_min.is_finite() && omega_min > 0.0) {
            return Err(GridError::NonPositiveMin(omega_min));
        }
        if !(omega_max.is_finite() && omega_max > omega_min) {
            return Err(GridError::EmptyRange {
                omega_min,
                omega_max,
            });
        }
        if n_points < MIN_POINTS {
            return Err(GridError::TooFewPoints(n_points));
        }
        let ln_min = omega_min.ln();
        let ln_max = omega_max.ln();
        let log_step = (ln_max - ln_min) / (n_points - 1) as f64;
        let mut log_nodes: Vec<f64> = (0..n_points)
            .map(|i| ln_min + i as f64 * log_step)
            .collect();
        log_nodes[n_points - 1] = ln_max;
        let mut nodes: Vec<f64> = log_nodes.iter().map(|l| l.exp()).collect();
        // pin the end points exactly
        nodes[0] = omega_min;
        nodes[n_points - 1] = omega_max;
        Ok(Self {
            omega_min,
            omega_max,
            log_step,
            nodes,
            log_nodes,
        })
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self, GridError> {
        Self::new(spec.omega_min, spec.omega_max, spec.n_points)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            n_points: self.len(),
        }
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// Spacing in `ln omega`.
    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn log_nodes(&self) -> &[f64] {
        &self.log_nodes
    }

    /// Trapezoid weights in `omega`: `sum_i w_i f_i` approximates the integral
    /// of `f` over `[omega_min, omega_max]`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.len();
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            let h = self.nodes[i + 1] - self.nodes[i];
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
        w
    }

    /// Index of the node closest to `omega` in log distance.
    pub fn nearest_index(&self, omega: f64) -> usize {
        if omega <= self.omega_min {
            return 0;
        }
        let pos = (omega.ln() - self.log_nodes[0]) / self.log_step;
        (pos.round().max(0.0) as usize).min(self.len() - 1)
    }

    /// Bracketing interval `(i, i + 1)` with `nodes[i] <= omega < nodes[i + 1]`,
    /// or `None` outside the grid.
    pub fn bracket(&self, omega: f64) -> Option<usize> {
        if !(omega >= self.omega_min && omega <= self.omega_max) {
            return None;
        }
        let pos = (omega.ln() - self.log_nodes[0]) / self.log_step;
        let mut i = (pos.floor().max(0.0) as usize).min(self.len() - 2);
        // guard against rounding at the node boundaries
        if omega < self.nodes[i] && i > 0 {
            i -= 1;
        } else if omega >= self.nodes[i + 1] && i + 2 < self.len() {
            i += 1;
        }
        Some(i)
    }
}
