//! Differential approximation model
//!
//! `dN/dt = d^2/domega^2 K`, `K = omega^5 N^4 d^2/domega^2 (1/N)` on a
//! log-spaced grid, advanced by variable-step AB2 or by a second-order
//! Runge-Kutta-Chebyshev method.
//!
//! The spatial operator is written in flux form: with trapezoid weights `w_i`,
//! `w_i dN_i/dt = F_{i+1/2} - F_{i-1/2}` and `F_{i+1/2} = (K_{i+1} - K_i) / h_i`.
//! On the interior this is the quadratic-exact three-point second derivative
//! of `K`; with `K = 0` on both boundary nodes and no flux through the ends
//! the trapezoid sums of `N` and `omega N` are conserved exactly by the
//! semi-discrete system.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::DamError;
use crate::grid::{GridSpec, LogFrequencyGrid};
use crate::spectrum::{ConservedPair, RjParams, Spectrum};

/// `K`, `Q = -dK/domega` and `P = omega Q + K` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxTriple {
    pub k: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    /// `amplitude * exp(-(omega - omega0)^2 / (2 sigma0^2))`
    Gaussian {
        omega0: f64,
        sigma0: f64,
        amplitude: f64,
    },
    RayleighJeans(RjParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamConfig {
    pub grid: GridSpec,
    pub initial: InitialCondition,
    pub integrator: Integrator,
    /// First time step (also the Euler bootstrap step).
    pub dt_initial: f64,
    /// Accuracy factor: `dt <= safety * min N / |dN/dt|`.
    pub safety: f64,
    /// Factor applied to the explicit stability limit of the fourth-order operator.
    pub stability: f64,
    /// Maximum growth of dt per accepted step.
    pub dt_growth: f64,
    pub dt_min: f64,
    /// Vacuum level relative to the initial maximum.
    pub floor_fraction: f64,
    /// Threshold, relative to the current maximum, defining the absolute fronts.
    pub front_threshold: f64,
    /// Nodes below this fraction of the current maximum are left out of the
    /// accuracy control and clamped rather than rejected.
    pub accuracy_cutoff: f64,
    /// The run stops once an absolute front is this many decades from the grid end.
    pub boundary_margin_decades: f64,
    pub t_final: f64,
    /// First non-zero output time; outputs are log-spaced after it.
    pub output_start: f64,
    pub outputs_per_decade: usize,
}

impl DamConfig {
    /// Desk-scale preset: `omega0 = 1` on `[1e-10, 1e8]` with 1200 nodes,
    /// Rosenbrock stepping.
    pub fn desk() -> Self {
        Self {
            grid: GridSpec {
                omega_min: 1e-10,
                omega_max: 1e8,
                n_points: 1200,
            },
            initial: InitialCondition::Gaussian {
                omega0: 1.0,
                sigma0: 0.1,
                amplitude: 1.0,
            },
            integrator: Integrator::Rosenbrock { tolerance: 1e-3 },
            dt_initial: 1e-8,
            safety: 0.1,
            stability: 0.5,
            dt_growth: 1.1,
            dt_min: 1e-30,
            floor_fraction: 1e-30,
            front_threshold: 1e-15,
            accuracy_cutoff: 1e-15,
            boundary_margin_decades: 1.0,
            t_final: f64::INFINITY,
            output_start: 1e-4,
            outputs_per_decade: 20,
        }
    }

    pub fn validate(&self) -> Result<(), DamError> {
        let cfg = |field: &'static str, message: String| Err(DamError::Config { field, message });
        LogFrequencyGrid::from_spec(self.grid)?;
        match self.initial {
            InitialCondition::Gaussian {
                omega0,
                sigma0,
                amplitude,
            } => {
                if !(omega0 > self.grid.omega_min && omega0 < self.grid.omega_max) {
                    return cfg("omega0", format!("{omega0} lies outside the grid"));
                }
                if !(sigma0 > 0.0 && sigma0.is_finite()) {
                    return cfg("sigma0", format!("must be positive, got {sigma0}"));
                }
                if !(amplitude > 0.0 && amplitude.is_finite()) {
                    return cfg("amplitude", format!("must be positive, got {amplitude}"));
                }
            }
            InitialCondition::RayleighJeans(p) => {
                RjParams::new(p.temperature, p.chemical_potential)?;
            }
        }
        let positive = [
            ("dt_initial", self.dt_initial),
            ("safety", self.safety),
            ("stability", self.stability),
            ("dt_min", self.dt_min),
            ("floor_fraction", self.floor_fraction),
            ("front_threshold", self.front_threshold),
            ("accuracy_cutoff", self.accuracy_cutoff),
            ("output_start", self.output_start),
            ("t_final", self.t_final),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return cfg(field, format!("must be positive, got {v}"));
            }
        }
        if self.dt_growth < 1.0 {
            return cfg("dt_growth", format!("must be >= 1, got {}", self.dt_growth));
        }
        match self.integrator {
            Integrator::Rkc { max_stages } if max_stages < 2 => {
                return cfg("max_stages", format!("must be at least 2, got {max_stages}"));
            }
            Integrator::Rosenbrock { tolerance } if !(tolerance > 0.0 && tolerance < 1.0) => {
                return cfg("tolerance", format!("must lie in (0, 1), got {tolerance}"));
            }
            _ => {}
        }
        if self.outputs_per_decade == 0 {
            return cfg("outputs_per_decade", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn initial_spectrum(&self) -> Result<Spectrum, DamError> {
        let grid = Arc::new(LogFrequencyGrid::from_spec(self.grid)?);
        let s = match self.initial {
            InitialCondition::Gaussian {
                omega0,
                sigma0,
                amplitude,
            } => Spectrum::from_fn(grid, 0.0, |w| {
                amplitude * (-(w - omega0).powi(2) / (2.0 * sigma0 * sigma0)).exp()
            })?,
            InitialCondition::RayleighJeans(p) => Spectrum::rayleigh_jeans(grid, p, 0.0)?,
        };
        Ok(s)
    }
}

/// Precomputed per-node stencil coefficients.
#[derive(Debug, Clone)]
pub struct DamOperator {
    omega: Vec<f64>,
    omega5: Vec<f64>,
    /// `2 / (h_- (h_- + h_+))` and `2 / (h_+ (h_- + h_+))`
    cm: Vec<f64>,
    cp: Vec<f64>,
    /// interval lengths `h_i = omega_{i+1} - omega_i`
    h: Vec<f64>,
    inv_w: Vec<f64>,
    weights: Vec<f64>,
    /// `h_min^4 / 16` per node, for the stability bound
    h4: Vec<f64>,
}

impl DamOperator {
    pub fn new(grid: &LogFrequencyGrid) -> Self {
        let omega = grid.nodes().to_vec();
        let n = omega.len();
        let h: Vec<f64> = omega.windows(2).map(|p| p[1] - p[0]).collect();
        let mut cm = vec![0.0; n];
        let mut cp = vec![0.0; n];
        let mut h4 = vec![0.0; n];
        for i in 1..n - 1 {
            let (hm, hp) = (h[i - 1], h[i]);
            cm[i] = 2.0 / (hm * (hm + hp));
            cp[i] = 2.0 / (hp * (hm + hp));
            h4[i] = hm.min(hp).powi(4) / 16.0;
        }
        h4[0] = h[0].powi(4) / 16.0;
        h4[n - 1] = h[n - 2].powi(4) / 16.0;
        let weights = grid.trapezoid_weights();
        Self {
            omega5: omega.iter().map(|w| w.powi(5)).collect(),
            inv_w: weights.iter().map(|w| 1.0 / w).collect(),
            omega,
            cm,
            cp,
            h,
            weights,
            h4,
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `K` on every node (zero on the two boundary nodes). `n` must be positive.
    pub fn k_into(&self, n: &[f64], k: &mut [f64]) {
        k.fill(0.0);
        self.k_range(n, k, 1, n.len() - 2);
    }

    fn k_range(&self, n: &[f64], k: &mut [f64], lo: usize, hi: usize) {
        for i in lo.max(1)..=hi.min(n.len() - 2) {
            let (a, b, c) = (n[i - 1], n[i], n[i + 1]);
            // N^4 times the second difference of 1/N, arranged so that each
            // difference of reciprocals is a plain difference of N
            let d = (b - a) / a * self.cm[i] + (b - c) / c * self.cp[i];
            k[i] = self.omega5[i] * b * b * b * d;
        }
    }

    /// Flux-form right-hand side from a precomputed `K`.
    pub fn rhs_from_k(&self, k: &[f64], rhs: &mut [f64]) {
        self.rhs_range(k, rhs, 0, k.len() - 1);
    }

    fn rhs_range(&self, k: &[f64], rhs: &mut [f64], lo: usize, hi: usize) {
        let len = k.len();
        let mut f_left = if lo > 0 {
            (k[lo] - k[lo - 1]) / self.h[lo - 1]
        } else {
            0.0
        };
        for i in lo..=hi {
            let f_right = if i + 1 < len {
                (k[i + 1] - k[i]) / self.h[i]
            } else {
                0.0
            };
            rhs[i] = (f_right - f_left) * self.inv_w[i];
            f_left = f_right;
        }
    }

    pub fn rhs_into(&self, n: &[f64], k: &mut [f64], rhs: &mut [f64]) {
        self.k_into(n, k);
        self.rhs_from_k(k, rhs);
    }

    /// Same as [`rhs_into`](Self::rhs_into) for a state whose vacuum nodes sit
    /// exactly at `floor`: there `K` vanishes identically, so only the window
    /// around the occupied nodes is evaluated.
    pub fn rhs_active(&self, n: &[f64], floor: f64, k: &mut [f64], rhs: &mut [f64]) {
        let len = n.len();
        k.fill(0.0);
        rhs.fill(0.0);
        let (Some(first), Some(last)) = (
            n.iter().position(|&v| v > floor),
            n.iter().rposition(|&v| v > floor),
        ) else {
            return;
        };
        let klo = first.saturating_sub(1);
        let khi = (last + 1).min(len - 1);
        self.k_range(n, k, klo, khi);
        self.rhs_range(k, rhs, klo.saturating_sub(1), (khi + 1).min(len - 1));
    }

    /// Explicit stability limit of AB2 for the linearised operator, taken over
    /// non-vacuum nodes. The diffusion coefficient includes the neighbour
    /// ratio because `K_i` depends on `1/N_{i +- 1}`.
    pub fn stability_dt(&self, n: &[f64], vacuum: f64) -> f64 {
        let len = n.len();
        let mut dt = f64::INFINITY;
        for i in 0..len {
            let b = n[i];
            if b <= vacuum {
                continue;
            }
            let lo = if i > 0 { n[i - 1] } else { b };
            let hi = if i + 1 < len { n[i + 1] } else { b };
            let m = lo.min(hi).min(b);
            let d = self.omega5[i] * b * b * (b / m) * (b / m);
            let bound = self.h4[i] / d;
            if bound < dt {
                dt = bound;
            }
        }
        dt
    }

    /// Tridiagonal Jacobian of `K` with respect to `N`: `tri[i]` holds
    /// `dK_i/dN_{i-1}`, `dK_i/dN_i`, `dK_i/dN_{i+1}`. Boundary rows are zero.
    pub fn k_jacobian_into(&self, n: &[f64], tri: &mut [[f64; 3]]) {
        let len = n.len();
        tri[0] = [0.0; 3];
        tri[len - 1] = [0.0; 3];
        for i in 1..len - 1 {
            let (a, b, c) = (n[i - 1], n[i], n[i + 1]);
            let w5 = self.omega5[i];
            let d = (b - a) / a * self.cm[i] + (b - c) / c * self.cp[i];
            let b3 = b * b * b;
            tri[i] = [
                -w5 * b3 * self.cm[i] * b / (a * a),
                w5 * (3.0 * b * b * d + b3 * (self.cm[i] / a + self.cp[i] / c)),
                -w5 * b3 * self.cp[i] * b / (c * c),
            ];
        }
    }

    /// Row `i` of the linear map `K -> rhs`, on columns `i-1, i, i+1`.
    fn flux_row(&self, i: usize) -> [f64; 3] {
        let len = self.omega.len();
        let left = if i > 0 { 1.0 / self.h[i - 1] } else { 0.0 };
        let right = if i + 1 < len { 1.0 / self.h[i] } else { 0.0 };
        let s = self.inv_w[i];
        [s * left, -s * (left + right), s * right]
    }

    pub fn conserved(&self, n: &[f64]) -> ConservedPair {
        let mut wa = 0.0;
        let mut en = 0.0;
        for i in 0..n.len() {
            wa += self.weights[i] * n[i];
            en += self.weights[i] * self.omega[i] * n[i];
        }
        ConservedPair {
            waveaction: wa,
            energy: en,
        }
    }
}

fn check_positive(s: &Spectrum, floor: f64) -> Result<(), DamError> {
    match s.values().iter().position(|&v| v <= floor) {
        Some(index) => Err(DamError::Positivity {
            index,
            omega: s.omega()[index],
            value: s.values()[index],
        }),
        None => Ok(()),
    }
}

/// `K`, `Q`, `P`. `Q` uses the centered first-derivative stencil that is exact
/// for quadratics; boundary nodes carry `K = Q = 0`.
pub fn dam_fluxes(s: &Spectrum) -> Result<FluxTriple, DamError> {
    check_positive(s, 0.0)?;
    let op = DamOperator::new(s.grid());
    Ok(fluxes_with(&op, s.values()))
}

fn fluxes_with(op: &DamOperator, n: &[f64]) -> FluxTriple {
    let len = n.len();
    let mut k = vec![0.0; len];
    op.k_into(n, &mut k);
    let mut q = vec![0.0; len];
    for i in 1..len - 1 {
        let (hm, hp) = (op.h[i - 1], op.h[i]);
        let d = -hp / (hm * (hm + hp)) * k[i - 1]
            + (hp - hm) / (hm * hp) * k[i]
            + hm / (hp * (hm + hp)) * k[i + 1];
        q[i] = -d;
    }
    let p = (0..len).map(|i| op.omega[i] * q[i] + k[i]).collect();
    FluxTriple { k, q, p }
}

/// `dN/dt` on every node.
pub fn dam_rhs(s: &Spectrum) -> Result<Vec<f64>, DamError> {
    check_positive(s, 0.0)?;
    let op = DamOperator::new(s.grid());
    let len = s.len();
    let mut k = vec![0.0; len];
    let mut rhs = vec![0.0; len];
    op.rhs_into(s.values(), &mut k, &mut rhs);
    Ok(rhs)
}

/// Time integrator used by [`run_dam`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Integrator {
    /// Variable-step two-step Adams-Bashforth, forward Euler bootstrap.
    Ab2,
    /// Second-order Runge-Kutta-Chebyshev with at most `max_stages` stages.
    /// Its stability interval grows like the square of the stage count, which
    /// lifts the fourth-order explicit step restriction.
    Rkc { max_stages: usize },
    /// Linearly implicit two-stage Rosenbrock method (L-stable, second order
    /// for any Jacobian approximation) with an embedded first-order error
    /// estimate. `tolerance` bounds the relative local error per step.
    Rosenbrock { tolerance: f64 },
}

/// Step-size and floor settings for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub safety: f64,
    pub stability: f64,
    pub dt_growth: f64,
    pub dt_min: f64,
    /// absolute vacuum level
    pub floor: f64,
    /// Nodes below this fraction of the current maximum count as vacuum.
    pub vacuum_fraction: f64,
    /// Upper limit for this step (output times, final time).
    pub dt_cap: f64,
    /// When false the step uses exactly `state.dt`.
    pub adaptive: bool,
}

impl StepControl {
    pub fn fixed(floor: f64) -> Self {
        Self {
            safety: f64::INFINITY,
            stability: f64::INFINITY,
            dt_growth: 1.0,
            dt_min: 0.0,
            floor,
            vacuum_fraction: 0.0,
            dt_cap: f64::INFINITY,
            adaptive: false,
        }
    }
}

/// Multistep state. `dt` is the step taken last (or the first step before
/// any step was taken).
#[derive(Debug, Clone)]
pub struct DamState {
    pub spectrum: Spectrum,
    pub dt: f64,
    pub prev_rhs: Option<Vec<f64>>,
    pub step_count: u64,
}

impl DamState {
    pub fn new(spectrum: Spectrum, dt: f64) -> Self {
        Self {
            spectrum,
            dt,
            prev_rhs: None,
            step_count: 0,
        }
    }
}

/// Damping parameter of the Chebyshev stability polynomial.
const RKC_DAMPING: f64 = 2.0 / 13.0;
const MAX_REJECTIONS: usize = 80;

/// Stage coefficients of the damped second-order RKC method.
#[derive(Debug, Clone)]
pub struct RkcTableau {
    pub stages: usize,
    /// Length of the real stability interval `[-beta, 0]`.
    pub beta: f64,
    mu: Vec<f64>,
    nu: Vec<f64>,
    mu_t: Vec<f64>,
    gamma_t: Vec<f64>,
}

impl RkcTableau {
    pub fn new(stages: usize) -> Self {
        let s = stages.max(2);
        let w0 = 1.0 + RKC_DAMPING / (s * s) as f64;
        let (mut t, mut dt, mut ddt) = (vec![0.0; s + 1], vec![0.0; s + 1], vec![0.0; s + 1]);
        t[0] = 1.0;
        t[1] = w0;
        dt[1] = 1.0;
        for j in 2..=s {
            t[j] = 2.0 * w0 * t[j - 1] - t[j - 2];
            dt[j] = 2.0 * t[j - 1] + 2.0 * w0 * dt[j - 1] - dt[j - 2];
            ddt[j] = 4.0 * dt[j - 1] + 2.0 * w0 * ddt[j - 1] - ddt[j - 2];
        }
        let w1 = dt[s] / ddt[s];
        let mut b = vec![0.0; s + 1];
        for j in 2..=s {
            b[j] = ddt[j] / (dt[j] * dt[j]);
        }
        b[0] = b[2];
        b[1] = b[2];
        let a: Vec<f64> = (0..=s).map(|j| 1.0 - b[j] * t[j]).collect();
        let mut mu = vec![0.0; s + 1];
        let mut nu = vec![0.0; s + 1];
        let mut mu_t = vec![0.0; s + 1];
        let mut gamma_t = vec![0.0; s + 1];
        mu_t[1] = b[1] * w1;
        for j in 2..=s {
            mu[j] = 2.0 * w0 * b[j] / b[j - 1];
            nu[j] = -b[j] / b[j - 2];
            mu_t[j] = 2.0 * w1 * b[j] / b[j - 1];
            gamma_t[j] = -a[j - 1] * mu_t[j];
        }
        Self {
            stages: s,
            beta: (w0 + 1.0) / w1,
            mu,
            nu,
            mu_t,
            gamma_t,
        }
    }

    /// Fewest stages whose stability interval covers `x = rho * dt`.
    pub fn stages_for(x: f64) -> usize {
        // beta(s) is close to 0.65 s^2; start from that guess and correct
        let mut s = ((x / 0.65).sqrt().ceil() as usize).max(2);
        while Self::new(s).beta < x {
            s += 1;
        }
        while s > 2 && Self::new(s - 1).beta >= x {
            s -= 1;
        }
        s
    }
}

/// Internal stepper working on raw buffers; shared by [`step_ab2`] and [`run_dam`].
struct Stepper {
    op: DamOperator,
    n: Vec<f64>,
    trial: Vec<f64>,
    k: Vec<f64>,
    rhs: Vec<f64>,
    prev_rhs: Vec<f64>,
    has_prev: bool,
    dt_prev: f64,
    t: f64,
    steps: u64,
    evaluations: u64,
    // RKC work buffers
    y1: Vec<f64>,
    y2: Vec<f64>,
    f: Vec<f64>,
    eval: Vec<f64>,
    tableau: Option<RkcTableau>,
    // Rosenbrock work
    tri: Vec<[f64; 3]>,
    lu: Vec<[f64; 5]>,
    significant: Vec<bool>,
    /// step proposed by the error controller, before output capping
    dt_next: f64,
}

impl Stepper {
    fn new(op: DamOperator, n: Vec<f64>, t: f64, dt_prev: f64, prev: Option<Vec<f64>>) -> Self {
        let len = n.len();
        let has_prev = prev.is_some();
        Self {
            op,
            trial: vec![0.0; len],
            k: vec![0.0; len],
            rhs: vec![0.0; len],
            prev_rhs: prev.unwrap_or_else(|| vec![0.0; len]),
            has_prev,
            dt_prev,
            t,
            steps: 0,
            evaluations: 0,
            y1: Vec::new(),
            y2: Vec::new(),
            f: Vec::new(),
            eval: Vec::new(),
            tableau: None,
            tri: Vec::new(),
            lu: Vec::new(),
            significant: Vec::new(),
            dt_next: dt_prev,
            n,
        }
    }

    /// Nodes at or below this level are vacuum for step control: they do
    /// not limit dt and are clamped to the floor instead of rejecting a step.
    fn significant_level(&self, c: &StepControl) -> f64 {
        let max = self.n.iter().cloned().fold(0.0, f64::max);
        c.floor.max(c.vacuum_fraction * max)
    }

    /// Accuracy limit `safety * min N / |dN/dt|` over non-vacuum nodes.
    fn accuracy_dt(&self, c: &StepControl) -> f64 {
        let mut acc = f64::INFINITY;
        let cut = self.significant_level(c);
        for (nv, r) in self.n.iter().zip(&self.rhs) {
            if *nv > cut && *r != 0.0 {
                acc = acc.min(nv / r.abs());
            }
        }
        c.safety * acc
    }

    fn growth_limit(&self, c: &StepControl) -> f64 {
        if self.steps > 0 || self.has_prev {
            c.dt_growth * self.dt_prev
        } else {
            self.dt_prev
        }
    }

    fn commit(&mut self, dt: f64) {
        std::mem::swap(&mut self.n, &mut self.trial);
        self.dt_prev = dt;
        self.t += dt;
        self.steps += 1;
    }

    /// One accepted AB2 step; returns the dt used.
    fn step_ab2(&mut self, c: &StepControl) -> Result<f64, DamError> {
        self.op.rhs_active(&self.n, c.floor, &mut self.k, &mut self.rhs);
        self.evaluations += 1;
        let mut dt = if c.adaptive {
            let stab = c.stability * self.op.stability_dt(&self.n, c.floor);
            self.accuracy_dt(c)
                .min(stab)
                .min(self.growth_limit(c))
                .min(c.dt_cap)
        } else {
            self.dt_prev.min(c.dt_cap)
        };
        let significant = self.significant_level(c);
        for _ in 0..MAX_REJECTIONS {
            if dt < c.dt_min {
                return Err(DamError::DtUnderflow {
                    dt,
                    dt_min: c.dt_min,
                    time: self.t,
                });
            }
            let ok = if self.has_prev {
                let r = dt / self.dt_prev;
                let (a, b) = (dt * (1.0 + 0.5 * r), dt * 0.5 * r);
                let (rhs, prev) = (&self.rhs, &self.prev_rhs);
                fill_trial(&self.n, &mut self.trial, c.floor, significant, |i| {
                    a * rhs[i] - b * prev[i]
                })
            } else {
                let rhs = &self.rhs;
                fill_trial(&self.n, &mut self.trial, c.floor, significant, |i| {
                    dt * rhs[i]
                })
            };
            if ok.is_none() {
                std::mem::swap(&mut self.prev_rhs, &mut self.rhs);
                self.has_prev = true;
                self.commit(dt);
                return Ok(dt);
            }
            if !c.adaptive {
                let index = ok.unwrap_or(0);
                return Err(DamError::Positivity {
                    index,
                    omega: self.op.omega[index],
                    value: self.trial[index],
                });
            }
            dt *= 0.5;
        }
        Err(DamError::PositivityUnrecoverable {
            attempts: MAX_REJECTIONS,
            time: self.t,
        })
    }

    /// One accepted RKC step; returns the dt used.
    fn step_rkc(&mut self, c: &StepControl, max_stages: usize) -> Result<f64, DamError> {
        let len = self.n.len();
        if self.y1.len() != len {
            self.y1 = vec![0.0; len];
            self.y2 = vec![0.0; len];
            self.f = vec![0.0; len];
            self.eval = vec![0.0; len];
        }
        self.op.rhs_active(&self.n, c.floor, &mut self.k, &mut self.rhs);
        self.evaluations += 1;
        // spectral radius of the linearised operator
        let rho = 1.0 / self.op.stability_dt(&self.n, c.floor);
        let stage_cap = RkcTableau::new(max_stages.max(2)).beta * c.stability;
        let mut dt = if c.adaptive {
            self.accuracy_dt(c)
                .min(self.growth_limit(c))
                .min(c.dt_cap)
                .min(stage_cap / rho)
        } else {
            self.dt_prev.min(c.dt_cap)
        };
        for _ in 0..MAX_REJECTIONS {
            if dt < c.dt_min {
                return Err(DamError::DtUnderflow {
                    dt,
                    dt_min: c.dt_min,
                    time: self.t,
                });
            }
            let s = RkcTableau::stages_for(rho * dt / c.stability).min(max_stages.max(2));
            if self.tableau.as_ref().map(|t| t.stages) != Some(s) {
                self.tableau = Some(RkcTableau::new(s));
            }
            let significant = self.significant_level(c);
            match self.rkc_attempt(dt, c.floor, significant) {
                None => {
                    self.commit(dt);
                    return Ok(dt);
                }
                Some(index) if !c.adaptive => {
                    return Err(DamError::Positivity {
                        index,
                        omega: self.op.omega[index],
                        value: self.trial[index],
                    })
                }
                Some(_) => dt *= 0.5,
            }
        }
        Err(DamError::PositivityUnrecoverable {
            attempts: MAX_REJECTIONS,
            time: self.t,
        })
    }

    /// Runs the stages into `trial`; returns the first non-vacuum node that
    /// fell to the floor, if any.
    fn rkc_attempt(&mut self, dt: f64, floor: f64, significant: f64) -> Option<usize> {
        let tab = self.tableau.as_ref().expect("tableau set by caller");
        let s = tab.stages;
        let len = self.n.len();
        // y2 = Y_{j-2}, y1 = Y_{j-1}, trial = Y_j
        self.y2.copy_from_slice(&self.n);
        for i in 0..len {
            self.y1[i] = self.n[i] + tab.mu_t[1] * dt * self.rhs[i];
        }
        for j in 2..=s {
            for i in 0..len {
                self.eval[i] = self.y1[i].max(floor);
            }
            self.op.rhs_active(&self.eval, floor, &mut self.k, &mut self.f);
            self.evaluations += 1;
            let (mu, nu) = (tab.mu[j], tab.nu[j]);
            let (mt, gt) = (tab.mu_t[j] * dt, tab.gamma_t[j] * dt);
            let c0 = 1.0 - mu - nu;
            for i in 0..len {
                self.trial[i] = c0 * self.n[i]
                    + mu * self.y1[i]
                    + nu * self.y2[i]
                    + mt * self.f[i]
                    + gt * self.rhs[i];
            }
            std::mem::swap(&mut self.y2, &mut self.y1);
            std::mem::swap(&mut self.y1, &mut self.trial);
        }
        // result is in y1
        std::mem::swap(&mut self.trial, &mut self.y1);
        let mut bad = None;
        for i in 0..len {
            let v = self.trial[i];
            if !(v > floor) {
                if self.n[i] > significant || v.is_nan() {
                    bad = Some(i);
                    break;
                }
                self.trial[i] = floor;
            }
        }
        bad
    }

    /// One accepted Rosenbrock step; returns the dt used.
    fn step_rosenbrock(&mut self, c: &StepControl, tolerance: f64) -> Result<f64, DamError> {
        let len = self.n.len();
        if self.tri.len() != len {
            self.tri = vec![[0.0; 3]; len];
            self.lu = vec![[0.0; 5]; len];
            self.y1 = vec![0.0; len];
            self.y2 = vec![0.0; len];
            self.f = vec![0.0; len];
            self.eval = vec![0.0; len];
        }
        self.op.k_into(&self.n, &mut self.k);
        self.op.k_jacobian_into(&self.n, &mut self.tri);
        self.evaluations += 1;
        self.mark_significant(c);
        let mut dt = if c.adaptive {
            self.dt_next.min(c.dt_cap)
        } else {
            self.dt_prev.min(c.dt_cap)
        };
        for _ in 0..MAX_REJECTIONS {
            if dt < c.dt_min {
                return Err(DamError::DtUnderflow {
                    dt,
                    dt_min: c.dt_min,
                    time: self.t,
                });
            }
            let (err, bad) = self.rosenbrock_attempt(dt, c.floor);
            let err = err / tolerance;
            if !c.adaptive {
                if let Some(index) = bad {
                    return Err(DamError::Positivity {
                        index,
                        omega: self.op.omega[index],
                        value: self.trial[index],
                    });
                }
                self.commit(dt);
                return Ok(dt);
            }
            if bad.is_none() && err <= 1.0 {
                let factor = if err > 0.0 { 0.9 / err.sqrt() } else { c.dt_growth };
                let proposal = dt * factor.clamp(0.2, c.dt_growth);
                self.commit(dt);
                // a step cut short by an output time does not shrink the next one
                self.dt_next = if dt < self.dt_next { self.dt_next.max(proposal) } else { proposal };
                return Ok(dt);
            }
            let factor = if bad.is_some() || !err.is_finite() {
                0.25
            } else {
                (0.9 / err.sqrt()).clamp(0.2, 0.9)
            };
            dt *= factor;
            self.dt_next = dt;
        }
        Err(DamError::PositivityUnrecoverable {
            attempts: MAX_REJECTIONS,
            time: self.t,
        })
    }

    /// Flags nodes where `N` or `omega N` exceeds `vacuum_fraction` times its
    /// maximum. As the spectrum condenses the peak of `N` grows by many
    /// decades while the Rayleigh-Jeans range keeps `omega N` near the
    /// temperature, so a threshold on `N` alone would drop that range.
    fn mark_significant(&mut self, c: &StepControl) {
        let w = &self.op.omega;
        let max_n = self.n.iter().cloned().fold(0.0, f64::max);
        let max_e = self.n.iter().zip(w).map(|(n, w)| n * w).fold(0.0, f64::max);
        let (cut_n, cut_e) = (
            c.floor.max(c.vacuum_fraction * max_n),
            c.vacuum_fraction * max_e,
        );
        self.significant.clear();
        self.significant.extend(
            self.n
                .iter()
                .zip(w)
                .map(|(&n, &w)| n > c.floor && (n > cut_n || n * w > cut_e)),
        );
    }

    /// Both stages into `trial`. Returns the scaled error estimate over
    /// significant nodes and the first significant node that fell to the floor.
    ///
    /// Writing the rhs as `L K(N)` with `L` the flux-difference operator, each
    /// stage is `k = L H` with `(I - gamma dt K'(N) L) H = ...`. The update is
    /// then a flux difference like the explicit rhs, so both invariants are
    /// conserved however ill-conditioned the solve is.
    fn rosenbrock_attempt(&mut self, dt: f64, floor: f64) -> (f64, Option<usize>) {
        let len = self.n.len();
        let g = ROS2_GAMMA * dt;
        for i in 0..len {
            let d = self.tri[i];
            let mut row = [0.0; 5];
            for (dm, &dv) in d.iter().enumerate() {
                let m = i + dm;
                if dv == 0.0 || m == 0 || m > len {
                    continue;
                }
                let m = m - 1;
                for (dj, lv) in self.op.flux_row(m).into_iter().enumerate() {
                    // column j = m + dj - 1 sits at offset j - i + 2 = dm + dj
                    let j = m + dj;
                    if j >= 1 && j <= len {
                        row[dm + dj] -= g * dv * lv;
                    }
                }
            }
            row[2] += 1.0;
            self.lu[i] = row;
        }
        penta_factor(&mut self.lu);
        // H1 from K(N), already in self.k
        self.y1.copy_from_slice(&self.k);
        penta_solve(&self.lu, &mut self.y1);
        self.op.rhs_from_k(&self.y1, &mut self.f);
        for i in 0..len {
            self.eval[i] = (self.n[i] + dt * self.f[i]).max(floor);
        }
        self.op.k_into(&self.eval, &mut self.y2);
        self.evaluations += 1;
        for i in 0..len {
            self.y2[i] -= 2.0 * self.y1[i];
        }
        penta_solve(&self.lu, &mut self.y2);
        // trial increment from 1.5 H1 + 0.5 H2; error from 0.5 (H1 + H2)
        for i in 0..len {
            self.eval[i] = 1.5 * self.y1[i] + 0.5 * self.y2[i];
            self.y2[i] = 0.5 * (self.y1[i] + self.y2[i]);
        }
        self.op.rhs_from_k(&self.eval, &mut self.f);
        self.op.rhs_from_k(&self.y2, &mut self.y1);
        let mut err: f64 = 0.0;
        let mut bad = None;
        for i in 0..len {
            let v = self.n[i] + dt * self.f[i];
            if self.significant[i] {
                if !(v > floor) {
                    bad.get_or_insert(i);
                } else {
                    err = err.max(dt * self.y1[i].abs() / self.n[i].max(v));
                }
            }
            self.trial[i] = if v > floor { v } else { floor };
        }
        if err.is_nan() {
            err = f64::INFINITY;
        }
        (err, bad)
    }
}

/// `1 + 1/sqrt(2)`.
const ROS2_GAMMA: f64 = 1.0 + std::f64::consts::FRAC_1_SQRT_2;

/// In-place LU factorisation without pivoting of a pentadiagonal matrix;
/// `a[i][d]` holds the entry in row `i`, column `i + d - 2`.
fn penta_factor(a: &mut [[f64; 5]]) {
    let len = a.len();
    for k in 0..len {
        let pivot = a[k][2];
        for i in k + 1..(k + 3).min(len) {
            // a[i][k] sits at offset k - i + 2
            let off = k + 2 - i;
            let l = a[i][off] / pivot;
            a[i][off] = l;
            for j in k + 1..(k + 3).min(len) {
                let v = a[k][j + 2 - k];
                a[i][j + 2 - i] -= l * v;
            }
        }
    }
}

fn penta_solve(lu: &[[f64; 5]], b: &mut [f64]) {
    let len = lu.len();
    for i in 0..len {
        let mut s = b[i];
        for j in i.saturating_sub(2)..i {
            s -= lu[i][j + 2 - i] * b[j];
        }
        b[i] = s;
    }
    for i in (0..len).rev() {
        let mut s = b[i];
        for j in i + 1..(i + 3).min(len) {
            s -= lu[i][j + 2 - i] * b[j];
        }
        b[i] = s / lu[i][2];
    }
}

/// Writes `n + delta(i)` into `trial`, clamping nodes at or below
/// `significant` back to the floor. Returns the first node above
/// `significant` that fell to the floor.
fn fill_trial(
    n: &[f64],
    trial: &mut [f64],
    floor: f64,
    significant: f64,
    delta: impl Fn(usize) -> f64,
) -> Option<usize> {
    for i in 0..n.len() {
        let v = n[i] + delta(i);
        if !(v > floor) {
            if n[i] > significant || v.is_nan() {
                trial[i] = v;
                return Some(i);
            }
            trial[i] = floor;
        } else {
            trial[i] = v;
        }
    }
    None
}

/// Advances `state` by one AB2 step (forward Euler when no previous rhs is
/// stored). With `control.adaptive` the step is chosen from the accuracy and
/// stability limits and halved on positivity failure; otherwise `state.dt`
/// is used as is.
pub fn step_ab2(state: &DamState, control: &StepControl) -> Result<DamState, DamError> {
    let s = &state.spectrum;
    let op = DamOperator::new(s.grid());
    let mut st = Stepper::new(
        op,
        s.values().to_vec(),
        s.time(),
        state.dt,
        state.prev_rhs.clone(),
    );
    let dt = st.step_ab2(control)?;
    Ok(DamState {
        spectrum: Spectrum::new(s.grid().clone(), st.n, st.t)?,
        dt,
        prev_rhs: Some(st.prev_rhs),
        step_count: state.step_count + 1,
    })
}

/// One RKC step of size `state.dt` with `stages` stages (no adaptivity).
/// The multistep history of `state` is ignored and cleared.
pub fn step_rkc(state: &DamState, stages: usize, floor: f64) -> Result<DamState, DamError> {
    let s = &state.spectrum;
    let op = DamOperator::new(s.grid());
    let mut st = Stepper::new(op, s.values().to_vec(), s.time(), state.dt, None);
    st.op.rhs_active(&st.n, floor, &mut st.k, &mut st.rhs);
    st.y1 = vec![0.0; s.len()];
    st.y2 = vec![0.0; s.len()];
    st.f = vec![0.0; s.len()];
    st.eval = vec![0.0; s.len()];
    st.tableau = Some(RkcTableau::new(stages));
    if let Some(index) = st.rkc_attempt(state.dt, floor, floor) {
        return Err(DamError::Positivity {
            index,
            omega: s.omega()[index],
            value: st.trial[index],
        });
    }
    st.commit(state.dt);
    Ok(DamState {
        spectrum: Spectrum::new(s.grid().clone(), st.n, st.t)?,
        dt: state.dt,
        prev_rhs: None,
        step_count: state.step_count + 1,
    })
}

/// One Rosenbrock step of size `state.dt` (no adaptivity). Nodes at or below
/// `floor` are clamped; any other node falling there is an error.
pub fn step_rosenbrock(state: &DamState, floor: f64) -> Result<DamState, DamError> {
    let s = &state.spectrum;
    let op = DamOperator::new(s.grid());
    let mut st = Stepper::new(op, s.values().to_vec(), s.time(), state.dt, None);
    let control = StepControl::fixed(floor);
    let dt = st.step_rosenbrock(&control, 1.0)?;
    Ok(DamState {
        spectrum: Spectrum::new(s.grid().clone(), st.n, st.t)?,
        dt,
        prev_rhs: None,
        step_count: state.step_count + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DamStatus {
    /// `t_final` reached.
    Completed,
    /// An absolute front came within the configured margin of the grid end.
    BoundaryReached,
}

/// Outermost node indices with `N > fraction * max N`.
pub fn support_edges(n: &[f64], fraction: f64) -> Option<(usize, usize)> {
    let max = n.iter().cloned().fold(0.0, f64::max);
    let thr = fraction * max;
    let lo = n.iter().position(|&v| v > thr)?;
    let hi = n.iter().rposition(|&v| v > thr)?;
    Some((lo, hi))
}

/// Totals reported at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamSummary {
    pub status: DamStatus,
    pub steps: u64,
    pub rhs_evaluations: u64,
    pub final_time: f64,
}

#[derive(Debug, Clone)]
pub struct DamRun {
    pub snapshots: Vec<Spectrum>,
    /// Conserved totals at every output time.
    pub conserved: Vec<(f64, ConservedPair)>,
    pub summary: DamSummary,
}

/// Output times: 0, then `output_start * 10^(k / per_decade)`.
fn output_time(cfg: &DamConfig, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        cfg.output_start * 10f64.powf((k - 1) as f64 / cfg.outputs_per_decade as f64)
    }
}

/// Runs the model, handing every output snapshot to `sink` as it is produced.
pub fn run_dam_with(
    cfg: &DamConfig,
    mut sink: impl FnMut(&Spectrum, ConservedPair),
) -> Result<DamSummary, DamError> {
    cfg.validate()?;
    let s0 = cfg.initial_spectrum()?;
    let grid = s0.grid().clone();
    let floor = cfg.floor_fraction * s0.max_value();
    let values: Vec<f64> = s0.values().iter().map(|&v| v.max(floor)).collect();
    let op = DamOperator::new(&grid);
    let mut st = Stepper::new(op, values, 0.0, cfg.dt_initial, None);

    let w = grid.nodes();
    let lo_stop = grid.omega_min() * 10f64.powf(cfg.boundary_margin_decades);
    let hi_stop = grid.omega_max() / 10f64.powf(cfg.boundary_margin_decades);

    let mut control = StepControl {
        safety: cfg.safety,
        stability: cfg.stability,
        dt_growth: cfg.dt_growth,
        dt_min: cfg.dt_min,
        floor,
        vacuum_fraction: cfg.accuracy_cutoff,
        dt_cap: f64::INFINITY,
        adaptive: true,
    };
    let summary = |status, st: &Stepper| DamSummary {
        status,
        steps: st.steps,
        rhs_evaluations: st.evaluations,
        final_time: st.t,
    };
    // edges that already touch the margin at t = 0 (e.g. RJ data filling the
    // grid) are not fronts and do not stop the run
    let initial = support_edges(&st.n, cfg.front_threshold);
    let watch_lo = initial.is_some_and(|(lo, _)| w[lo] > lo_stop);
    let watch_hi = initial.is_some_and(|(_, hi)| w[hi] < hi_stop);
    let mut k_out = 0;
    loop {
        let t_out = output_time(cfg, k_out).min(cfg.t_final);
        if st.t >= t_out {
            let snap = Spectrum::new(grid.clone(), st.n.clone(), st.t)?;
            sink(&snap, st.op.conserved(&st.n));
            k_out += 1;
            if let Some((lo, hi)) = support_edges(&st.n, cfg.front_threshold) {
                if (watch_lo && w[lo] <= lo_stop) || (watch_hi && w[hi] >= hi_stop) {
                    return Ok(summary(DamStatus::BoundaryReached, &st));
                }
            }
            if st.t >= cfg.t_final {
                return Ok(summary(DamStatus::Completed, &st));
            }
            continue;
        }
        control.dt_cap = t_out - st.t;
        match cfg.integrator {
            Integrator::Ab2 => st.step_ab2(&control)?,
            Integrator::Rkc { max_stages } => st.step_rkc(&control, max_stages)?,
            Integrator::Rosenbrock { tolerance } => st.step_rosenbrock(&control, tolerance)?,
        };
        // land exactly on the output time when within round-off
        if (t_out - st.t).abs() <= 1e-12 * t_out {
            st.t = t_out;
        }
    }
}

pub fn run_dam(cfg: &DamConfig) -> Result<DamRun, DamError> {
    let mut snapshots = Vec::new();
    let mut conserved = Vec::new();
    let summary = run_dam_with(cfg, |s, c| {
        conserved.push((s.time(), c));
        snapshots.push(s.clone());
    })?;
    Ok(DamRun {
        snapshots,
        conserved,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Arc<LogFrequencyGrid> {
        Arc::new(LogFrequencyGrid::new(lo, hi, n).unwrap())
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn rj_and_constant_are_stationary() {
        let g = grid(1e-3, 1e3, 300);
        let rj = Spectrum::rayleigh_jeans(g.clone(), RjParams::new(2.0, 0.5).unwrap(), 0.0).unwrap();
        let f = dam_fluxes(&rj).unwrap();
        // scale: the same expression with the second difference replaced by its largest term
        let op = DamOperator::new(&g);
        let scale = (1..g.len() - 1)
            .map(|i| {
                let n = rj.values()[i];
                op.omega5[i] * n.powi(4) * (op.cm[i] + op.cp[i]) / n
            })
            .fold(0.0, f64::max);
        assert!(max_abs(&f.k) <= 1e-12 * scale, "{}", max_abs(&f.k) / scale);
        let c = Spectrum::from_fn(g, 0.0, |_| 0.7).unwrap();
        assert!(max_abs(&dam_fluxes(&c).unwrap().k) == 0.0);
        assert!(max_abs(&dam_rhs(&c).unwrap()) == 0.0);
    }

    #[test]
    fn power_law_k_is_second_order() {
        // N = omega^(-2/3): 1/N = omega^(2/3), (1/N)'' = -(2/9) omega^(-4/3),
        // K = omega^5 omega^(-8/3) (1/N)'' = -(2/9) omega
        let err = |n: usize| {
            let s = Spectrum::from_fn(grid(1.0, 10.0, n), 0.0, |w| w.powf(-2.0 / 3.0)).unwrap();
            let f = dam_fluxes(&s).unwrap();
            (1..n - 1)
                .map(|i| (f.k[i] / (-2.0 / 9.0 * s.omega()[i]) - 1.0).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(101), err(201));
        assert!(e1 < 1e-3, "{e1}");
        assert!((e1 / e2 - 4.0).abs() < 0.3, "{}", e1 / e2);
    }

    #[test]
    fn fluxes_satisfy_energy_relation() {
        let s = Spectrum::from_fn(grid(0.1, 10.0, 200), 0.0, |w| 1.0 / (0.3 + w) + 0.1 * (-w).exp()).unwrap();
        let f = dam_fluxes(&s).unwrap();
        assert_eq!((f.k[0], f.q[0]), (0.0, 0.0));
        for i in 0..s.len() {
            assert_eq!(f.p[i], s.omega()[i] * f.q[i] + f.k[i]);
        }
    }

    #[test]
    fn gaussian_rhs_conserves_both_totals() {
        let cfg = DamConfig::desk();
        let s0 = cfg.initial_spectrum().unwrap();
        let s = Spectrum::new(
            s0.grid().clone(),
            s0.values().iter().map(|v| v.max(1e-30)).collect(),
            0.0,
        )
        .unwrap();
        let rhs = dam_rhs(&s).unwrap();
        let w = s.grid().trapezoid_weights();
        let (mut dn, mut de, mut scale) = (0.0, 0.0, 0.0);
        for i in 0..rhs.len() {
            dn += rhs[i] * w[i];
            de += s.omega()[i] * rhs[i] * w[i];
            scale += (rhs[i] * w[i]).abs() * s.omega()[i].max(1.0);
        }
        assert!(scale > 0.0);
        assert!(dn.abs() <= 1e-10 * scale && de.abs() <= 1e-10 * scale, "{dn} {de} {scale}");
    }

    #[test]
    fn positivity_violation_is_reported() {
        let mut v = vec![1.0; 20];
        v[7] = 0.0;
        let s = Spectrum::new(grid(1.0, 2.0, 20), v, 0.0).unwrap();
        assert!(matches!(dam_rhs(&s), Err(DamError::Positivity { index: 7, .. })));
    }

    fn smooth_state() -> Spectrum {
        Spectrum::from_fn(grid(0.5, 2.0, 16), 0.0, |w| {
            1.0 / (0.2 + w) * (1.0 + 0.2 * (-(w - 1.0).powi(2) / 0.05).exp())
        })
        .unwrap()
    }

    /// Spectral radius estimate of the linearised operator on `s`.
    fn rho(s: &Spectrum) -> f64 {
        1.0 / DamOperator::new(s.grid()).stability_dt(s.values(), 0.0)
    }

    #[test]
    fn euler_bootstrap_is_exact() {
        let s = smooth_state();
        let rhs = dam_rhs(&s).unwrap();
        let dt = 1e-6;
        let st = step_ab2(&DamState::new(s.clone(), dt), &StepControl::fixed(0.0)).unwrap();
        assert_eq!(st.step_count, 1);
        for i in 0..s.len() {
            assert_eq!(st.spectrum.values()[i], s.values()[i] + dt * rhs[i]);
        }
    }

    #[test]
    fn rj_state_is_unchanged_by_a_step() {
        let s = Spectrum::rayleigh_jeans(grid(0.1, 10.0, 60), RjParams::new(1.0, 1.0).unwrap(), 0.0).unwrap();
        let st = step_ab2(&DamState::new(s.clone(), 1e-3), &StepControl::fixed(0.0)).unwrap();
        for (a, b) in st.spectrum.values().iter().zip(s.values()) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    /// Classical RK4 on the same semi-discrete system.
    fn rk4(s: &Spectrum, dt: f64, steps: usize) -> Vec<f64> {
        let g = s.grid().clone();
        let f = |v: &[f64]| dam_rhs(&Spectrum::new(g.clone(), v.to_vec(), 0.0).unwrap()).unwrap();
        let mut y = s.values().to_vec();
        for _ in 0..steps {
            let k1 = f(&y);
            let y2: Vec<f64> = (0..y.len()).map(|i| y[i] + 0.5 * dt * k1[i]).collect();
            let k2 = f(&y2);
            let y3: Vec<f64> = (0..y.len()).map(|i| y[i] + 0.5 * dt * k2[i]).collect();
            let k3 = f(&y3);
            let y4: Vec<f64> = (0..y.len()).map(|i| y[i] + dt * k3[i]).collect();
            let k4 = f(&y4);
            for i in 0..y.len() {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    }

    #[test]
    fn two_ab2_steps_match_rk4_to_second_order() {
        let s = smooth_state();
        let err = |dt: f64| {
            let mut st = DamState::new(s.clone(), dt);
            for _ in 0..2 {
                st = step_ab2(&st, &StepControl::fixed(0.0)).unwrap();
            }
            let reference = rk4(&s, dt / 64.0, 128);
            st.spectrum
                .values()
                .iter()
                .zip(&reference)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let dt = 0.1 / rho(&s);
        let (e1, e2) = (err(dt), err(dt / 2.0));
        assert!(e1 > 1e-13 && (e1 / e2 - 4.0).abs() < 0.5, "{e1} {e2}");
    }

    #[test]
    fn rkc_tableau_interval_and_order() {
        assert!(RkcTableau::new(2).beta > 1.9);
        for s in [10, 20, 100] {
            let t = RkcTableau::new(s);
            let ratio = t.beta / (s * s) as f64;
            assert!(ratio > 0.6 && ratio < 0.68, "{s}: {ratio}");
        }
        // scalar recursion y' = lambda y: |R(z)| <= 1 on [-beta, 0] and
        // R(z) = 1 + z + z^2/2 + O(z^3) near 0
        let t = RkcTableau::new(12);
        let r = |z: f64| {
            let (mut y2, mut y1) = (1.0, 1.0 + t.mu_t[1] * z);
            for j in 2..=t.stages {
                let c0 = 1.0 - t.mu[j] - t.nu[j];
                let y = c0 + t.mu[j] * y1 + t.nu[j] * y2 + t.mu_t[j] * z * y1 + t.gamma_t[j] * z;
                y2 = y1;
                y1 = y;
            }
            y1
        };
        for k in 0..=400 {
            let z = -t.beta * k as f64 / 400.0;
            assert!(r(z).abs() <= 1.0 + 1e-12, "z={z}: {}", r(z));
        }
        for z in [-1e-2, -5e-3] {
            let exact = 1.0 + z + z * z / 2.0;
            assert!((r(z) - exact).abs() < 2.0 * z.abs().powi(3));
        }
        assert_eq!(RkcTableau::stages_for(0.1), 2);
        let s = RkcTableau::stages_for(1e4);
        assert!(RkcTableau::new(s).beta >= 1e4 && RkcTableau::new(s - 1).beta < 1e4);
    }

    #[test]
    fn rkc_step_is_second_order() {
        let s = smooth_state();
        let err = |dt: f64| {
            let st = step_rkc(&DamState::new(s.clone(), dt), 10, 0.0).unwrap();
            let reference = rk4(&s, dt / 64.0, 64);
            st.spectrum
                .values()
                .iter()
                .zip(&reference)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        // local error O(dt^3)
        let dt = 2.0 / rho(&s);
        let (e1, e2) = (err(dt), err(dt / 2.0));
        assert!(e1 > 1e-13 && (e1 / e2 - 8.0).abs() < 1.5, "{e1} {e2}");
    }

    #[test]
    fn k_jacobian_matches_differences() {
        let s = smooth_state();
        let op = DamOperator::new(s.grid());
        let n = s.values().to_vec();
        let len = n.len();
        let mut tri = vec![[0.0; 3]; len];
        op.k_jacobian_into(&n, &mut tri);
        let mut k0 = vec![0.0; len];
        let mut k1 = vec![0.0; len];
        op.k_into(&n, &mut k0);
        for j in 0..len {
            let mut p = n.clone();
            let eps = 1e-6 * n[j];
            p[j] += eps;
            op.k_into(&p, &mut k1);
            for i in j.saturating_sub(1)..(j + 2).min(len) {
                let fd = (k1[i] - k0[i]) / eps;
                let an = tri[i][j + 1 - i];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-12), "{i} {j} {fd} {an}");
            }
        }
    }

    #[test]
    fn rosenbrock_step_is_second_order() {
        let s = smooth_state();
        let err = |dt: f64| {
            let st = step_rosenbrock(&DamState::new(s.clone(), dt), 0.0).unwrap();
            let reference = rk4(&s, dt / 64.0, 64);
            st.spectrum
                .values()
                .iter()
                .zip(&reference)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let dt = 0.2 / rho(&s);
        let (e1, e2) = (err(dt), err(dt / 2.0));
        assert!(e1 > 1e-13 && (e1 / e2 - 8.0).abs() < 1.5, "{e1} {e2}");
    }

    #[test]
    fn stiff_rosenbrock_step_conserves_exactly() {
        let s = smooth_state();
        let op = DamOperator::new(s.grid());
        let c0 = op.conserved(s.values());
        // far beyond any explicit limit
        let st = step_rosenbrock(&DamState::new(s.clone(), 1e4 / rho(&s)), 0.0).unwrap();
        let c1 = op.conserved(st.spectrum.values());
        assert!((c1.waveaction / c0.waveaction - 1.0).abs() < 1e-14);
        assert!((c1.energy / c0.energy - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rj_run_stays_put() {
        let mut cfg = DamConfig::desk();
        cfg.grid = GridSpec {
            omega_min: 0.1,
            omega_max: 10.0,
            n_points: 60,
        };
        cfg.initial = InitialCondition::RayleighJeans(RjParams::new(1.0, 1.0).unwrap());
        cfg.t_final = 1.0;
        cfg.output_start = 1e-2;
        cfg.outputs_per_decade = 4;
        let run = run_dam(&cfg).unwrap();
        assert_eq!(run.summary.status, DamStatus::Completed);
        let ic = cfg.initial_spectrum().unwrap();
        assert!(run.snapshots.len() >= 9);
        for s in &run.snapshots {
            for (a, b) in s.values().iter().zip(ic.values()) {
                assert!((a / b - 1.0).abs() < 1e-8);
            }
        }
        assert_eq!(run.snapshots.last().unwrap().time(), 1.0);
    }

    #[test]
    fn short_gaussian_run_conserves() {
        let mut cfg = DamConfig::desk();
        cfg.grid.n_points = 600;
        cfg.t_final = 1.0;
        let run = run_dam(&cfg).unwrap();
        let (_, c0) = run.conserved[0];
        let (_, c1) = *run.conserved.last().unwrap();
        assert!((c1.waveaction / c0.waveaction - 1.0).abs() < 1e-10);
        assert!((c1.energy / c0.energy - 1.0).abs() < 1e-10);
        // the spectrum spreads on both sides
        let (lo0, hi0) = support_edges(run.snapshots[0].values(), 1e-15).unwrap();
        let (lo1, hi1) = support_edges(run.snapshots.last().unwrap().values(), 1e-15).unwrap();
        assert!(lo1 < lo0 && hi1 > hi0);
    }

    #[test]
    fn config_validation() {
        let mut c = DamConfig::desk();
        c.safety = 0.0;
        assert!(matches!(c.validate(), Err(DamError::Config { field: "safety", .. })));
        let mut c = DamConfig::desk();
        c.initial = InitialCondition::Gaussian {
            omega0: 1e9,
            sigma0: 0.1,
            amplitude: 1.0,
        };
        assert!(matches!(c.validate(), Err(DamError::Config { field: "omega0", .. })));
        assert!(DamConfig::desk().validate().is_ok());
    }
}
