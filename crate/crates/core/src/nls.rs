//! Pseudospectral solver for the 2D defocusing NLS
//! `i psi_t = -lap psi + |psi|^2 psi - i nu (-lap)^p psi` on a periodic box.
//!
//! Conventions: `psi_hat_k = (1/L^2) int psi e^{-ikx} d^2x`, so on an `n x n`
//! grid `psi_hat = fft(psi) / n^2` and `psi = ifft_unnormalized(psi_hat)`.
//! Wave numbers are `k = (2 pi / L) m` with `m` in `[-n/2, n/2)`.
//!
//! The field is kept inside the band `|m_x|, |m_y| <= n/3`. With that band the
//! cubic term computed on a `3n/2` padded grid is free of aliasing, so it agrees
//! with any finer oversampling to round-off.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::NlsError;
use crate::grid::LogFrequencyGrid;
use crate::spectrum::Spectrum;

type C64 = Complex64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Contour points for the ETD coefficients.
const CONTOUR_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Physical,
    Spectral,
}

impl Representation {
    fn name(self) -> &'static str {
        match self {
            Representation::Physical => "physical",
            Representation::Spectral => "spectral",
        }
    }
}

/// Two-dimensional FFT on an `m x m` row-major array (`data[iy * m + ix]`).
#[derive(Clone)]
struct Fft2 {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl Fft2 {
    fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            m,
            forward,
            inverse,
            scratch_len,
        }
    }

    fn transpose(&self, data: &mut [C64]) {
        let m = self.m;
        for i in 0..m {
            for j in i + 1..m {
                data.swap(i * m + j, j * m + i);
            }
        }
    }

    /// Unnormalized transform. Only rows flagged in `first` are transformed in
    /// the first pass and only lines flagged in `second` in the second pass;
    /// `None` means all. The result is returned in the original layout.
    fn run(
        &self,
        data: &mut [C64],
        inverse: bool,
        first: Option<&[bool]>,
        second: Option<&[bool]>,
        scratch: &mut Vec<C64>,
    ) {
        let m = self.m;
        let plan = if inverse { &self.inverse } else { &self.forward };
        scratch.resize(self.scratch_len, ZERO);
        let pass = |data: &mut [C64], sel: Option<&[bool]>, scratch: &mut [C64]| match sel {
            None => plan.process_with_scratch(data, scratch),
            Some(sel) => {
                for (row, &on) in data.chunks_exact_mut(m).zip(sel) {
                    if on {
                        plan.process_with_scratch(row, scratch);
                    }
                }
            }
        };
        pass(data, first, scratch);
        self.transpose(data);
        pass(data, second, scratch);
        self.transpose(data);
    }
}

/// Signed mode number of index `i` on an `n` grid.
fn mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Index of mode `m` on an `n` grid.
fn index(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

/// Largest retained mode number per axis.
pub fn band_limit(n: usize) -> usize {
    n / 3
}

fn check_resolution(n: usize) -> Result<(), NlsError> {
    if n >= 8 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(NlsError::Config {
            field: "resolution",
            message: format!("{n} is not a power of two >= 8"),
        })
    }
}

/// `psi` or `psi_hat` on an `n x n` periodic grid of side `box_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    n: usize,
    box_size: f64,
    data: Vec<C64>,
    representation: Representation,
}

impl ComplexField {
    pub fn zeros(n: usize, box_size: f64, representation: Representation) -> Result<Self, NlsError> {
        check_resolution(n)?;
        Ok(Self {
            n,
            box_size,
            data: vec![ZERO; n * n],
            representation,
        })
    }

    pub fn from_data(
        n: usize,
        box_size: f64,
        data: Vec<C64>,
        representation: Representation,
    ) -> Result<Self, NlsError> {
        check_resolution(n)?;
        if data.len() != n * n {
            return Err(NlsError::ResolutionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self {
            n,
            box_size,
            data,
            representation,
        })
    }

    /// A single plane wave `c e^{i k x}` with mode numbers `(mx, my)`, in spectral form.
    pub fn plane_wave(n: usize, box_size: f64, mx: i64, my: i64, c: C64) -> Result<Self, NlsError> {
        let mut f = Self::zeros(n, box_size, Representation::Spectral)?;
        f.data[index(my, n) * n + index(mx, n)] = c;
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_size(&self) -> f64 {
        self.box_size
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// Spectral coefficient of mode `(mx, my)`.
    pub fn mode(&self, mx: i64, my: i64) -> C64 {
        self.data[index(my, self.n) * self.n + index(mx, self.n)]
    }

    /// `2 pi / L`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.box_size
    }

    /// `|k|^2` of every grid index, in storage order.
    pub fn k_squared(&self) -> Vec<f64> {
        k_squared(self.n, self.box_size)
    }

    pub fn to_physical(&self) -> ComplexField {
        match self.representation {
            Representation::Physical => self.clone(),
            Representation::Spectral => {
                let mut data = self.data.clone();
                Fft2::new(self.n).run(&mut data, true, None, None, &mut Vec::new());
                Self {
                    data,
                    representation: Representation::Physical,
                    ..*self
                }
            }
        }
    }

    pub fn to_spectral(&self) -> ComplexField {
        match self.representation {
            Representation::Spectral => self.clone(),
            Representation::Physical => {
                let mut data = self.data.clone();
                Fft2::new(self.n).run(&mut data, false, None, None, &mut Vec::new());
                let scale = 1.0 / (self.n * self.n) as f64;
                data.iter_mut().for_each(|v| *v *= scale);
                Self {
                    data,
                    representation: Representation::Spectral,
                    ..*self
                }
            }
        }
    }

    /// `sum |psi_hat|^2`, equal to the spatial mean of `|psi|^2`.
    pub fn waveaction(&self) -> f64 {
        match self.representation {
            Representation::Spectral => self.data.iter().map(|v| v.norm_sqr()).sum(),
            Representation::Physical => {
                self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / (self.n * self.n) as f64
            }
        }
    }

    fn require_spectral(&self) -> Result<(), NlsError> {
        if self.representation == Representation::Spectral {
            Ok(())
        } else {
            Err(NlsError::Representation {
                expected: "spectral",
                found: self.representation.name(),
            })
        }
    }
}

fn k_squared(n: usize, box_size: f64) -> Vec<f64> {
    let dk = 2.0 * PI / box_size;
    let mut out = Vec::with_capacity(n * n);
    for iy in 0..n {
        let ky = mode(iy, n) as f64 * dk;
        for ix in 0..n {
            let kx = mode(ix, n) as f64 * dk;
            out.push(kx * kx + ky * ky);
        }
    }
    out
}

/// Retained-band flag of every grid index.
fn band_mask(n: usize) -> Vec<bool> {
    let k = band_limit(n) as i64;
    let mut out = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            out.push(mode(iy, n).abs() <= k && mode(ix, n).abs() <= k);
        }
    }
    out
}

/// Run parameters. Lengths and times are in the units of the equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlsConfig {
    /// Grid points per side; a power of two.
    pub resolution: usize,
    pub box_size: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Hyperviscosity coefficient.
    pub nu: f64,
    /// Power of the Laplacian in the dissipation term.
    pub hyper_order: u32,
    pub amplitude: f64,
    pub k0: f64,
    pub sigma0: f64,
    pub seed: u64,
    pub members: usize,
    /// First non-zero output time; outputs are log-spaced after it.
    pub output_start: f64,
    pub outputs_per_decade: usize,
    /// Invariants are recorded every this many steps (and at every output).
    pub invariants_every: u64,
    /// Density of the log-frequency bins used for spectra.
    pub bins_per_decade: usize,
}

impl NlsConfig {
    /// Desk-scale preset: 256^2, four members, `nu` tuned to `t_final`.
    pub fn desk() -> Self {
        let mut cfg = Self {
            resolution: 256,
            box_size: 2.0 * PI,
            dt: 1e-3,
            t_final: 20.0,
            nu: 0.0,
            hyper_order: 8,
            amplitude: 0.3162,
            k0: 16.0,
            sigma0: 0.05,
            seed: 1,
            members: 4,
            output_start: 0.1,
            outputs_per_decade: 20,
            invariants_every: 100,
            bins_per_decade: 20,
        };
        cfg.nu = cfg.desk_viscosity();
        cfg
    }

    /// Largest retained wave number per axis.
    pub fn k_max(&self) -> f64 {
        band_limit(self.resolution) as f64 * 2.0 * PI / self.box_size
    }

    /// `k_max^2`.
    pub fn omega_max(&self) -> f64 {
        self.k_max().powi(2)
    }

    /// `nu` with `nu k_max^(2p) t_final = 10`.
    pub fn desk_viscosity(&self) -> f64 {
        10.0 / (self.k_max().powi(2 * self.hyper_order as i32) * self.t_final)
    }

    pub fn validate(&self) -> Result<(), NlsError> {
        check_resolution(self.resolution)?;
        let bad = |field: &'static str, message: String| Err(NlsError::Config { field, message });
        let positive = [
            ("box_size", self.box_size),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("amplitude", self.amplitude),
            ("k0", self.k0),
            ("sigma0", self.sigma0),
            ("output_start", self.output_start),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, format!("must be positive, got {v}"));
            }
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad("nu", format!("must be non-negative, got {}", self.nu));
        }
        if self.hyper_order == 0 {
            return bad("hyper_order", "must be at least 1".into());
        }
        if self.members == 0 {
            return bad("members", "must be at least 1".into());
        }
        if self.outputs_per_decade == 0 {
            return bad("outputs_per_decade", "must be at least 1".into());
        }
        if self.invariants_every == 0 {
            return bad("invariants_every", "must be at least 1".into());
        }
        if self.bins_per_decade == 0 {
            return bad("bins_per_decade", "must be at least 1".into());
        }
        Ok(())
    }

    /// Log grid covering every retained shell, from `dk^2` to `2 k_max^2`.
    pub fn spectrum_grid(&self) -> Result<LogFrequencyGrid, NlsError> {
        let dk = 2.0 * PI / self.box_size;
        let lo = dk * dk;
        let hi = 2.0 * self.omega_max();
        let decades = (hi / lo).log10();
        let n = (decades * self.bins_per_decade as f64).ceil() as usize + 1;
        Ok(LogFrequencyGrid::new(lo, hi, n.max(2))?)
    }
}

/// Random-phase initial condition for ensemble member seed `seed`.
///
/// `|psi_hat_k| = A exp(-ln^2(|k|/k0) / (2 sigma0^2))` inside the retained band,
/// `psi_hat_0 = 0`, phases uniform on `[0, 2 pi)`. A phase is drawn for every
/// grid index in storage order, so the stream does not depend on the band.
pub fn init_random_phase(cfg: &NlsConfig, seed: u64) -> Result<ComplexField, NlsError> {
    cfg.validate()?;
    let n = cfg.resolution;
    let mut f = ComplexField::zeros(n, cfg.box_size, Representation::Spectral)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = band_mask(n);
    let k2 = k_squared(n, cfg.box_size);
    for ((v, &keep), &k2) in f.data.iter_mut().zip(&mask).zip(&k2) {
        let theta = rng.gen::<f64>() * 2.0 * PI;
        if keep && k2 > 0.0 {
            let l = (k2.sqrt() / cfg.k0).ln();
            let modulus = cfg.amplitude * (-l * l / (2.0 * cfg.sigma0 * cfg.sigma0)).exp();
            *v = C64::from_polar(modulus, theta);
        }
    }
    Ok(f)
}

/// Padded-grid workspace for `|psi|^2 psi`.
#[derive(Clone)]
struct Cubic {
    n: usize,
    m: usize,
    band: i64,
    fft: Fft2,
    /// Padded rows (and, after the transpose, columns) that hold retained modes.
    lines: Vec<bool>,
    pad: Vec<C64>,
    scratch: Vec<C64>,
}

impl Cubic {
    fn new(n: usize, m: usize) -> Self {
        let band = band_limit(n) as i64;
        let lines = (0..m).map(|i| mode(i, m).abs() <= band).collect();
        Self {
            n,
            m,
            band,
            fft: Fft2::new(m),
            lines,
            pad: vec![ZERO; m * m],
            scratch: Vec::new(),
        }
    }

    fn retained(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (n, m, b) = (self.n, self.m, self.band);
        (-b..=b).flat_map(move |my| {
            (-b..=b).map(move |mx| (index(my, n) * n + index(mx, n), index(my, m) * m + index(mx, m)))
        })
    }

    /// Fills the padded grid with `psi` in physical space.
    fn to_physical(&mut self, psi_hat: &[C64]) {
        self.pad.iter_mut().for_each(|v| *v = ZERO);
        for (i, j) in self.retained().collect::<Vec<_>>() {
            self.pad[j] = psi_hat[i];
        }
        let lines = self.lines.clone();
        self.fft.run(&mut self.pad, true, Some(&lines), None, &mut self.scratch);
    }

    /// Retained modes of `scale * |psi|^2 psi`; everything else is zero.
    fn apply(&mut self, psi_hat: &[C64], scale: C64, out: &mut [C64]) {
        self.to_physical(psi_hat);
        for v in self.pad.iter_mut() {
            *v *= v.norm_sqr();
        }
        let lines = self.lines.clone();
        self.fft.run(&mut self.pad, false, None, Some(&lines), &mut self.scratch);
        let s = scale / (self.m * self.m) as f64;
        out.iter_mut().for_each(|v| *v = ZERO);
        for (i, j) in self.retained().collect::<Vec<_>>() {
            out[i] = self.pad[j] * s;
        }
    }

    /// Spatial mean of `|psi|^4` (exact for band-limited `psi`).
    fn quartic_mean(&mut self, psi_hat: &[C64]) -> f64 {
        self.to_physical(psi_hat);
        self.pad.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() / (self.m * self.m) as f64
    }
}

/// `|psi|^2 psi` by zero padding to `3n/2` per side, restricted to the retained
/// band. Input modes outside the band are ignored.
pub fn dealiased_cubic(field: &ComplexField) -> Result<ComplexField, NlsError> {
    field.require_spectral()?;
    cubic_with_padding(field, 3 * field.n / 2)
}

/// Same product computed on an `m x m` padded grid, `m >= 3n/2`.
pub fn cubic_with_padding(field: &ComplexField, m: usize) -> Result<ComplexField, NlsError> {
    field.require_spectral()?;
    if m < 3 * field.n / 2 {
        return Err(NlsError::ResolutionMismatch {
            expected: 3 * field.n / 2,
            found: m,
        });
    }
    let mut out = ComplexField::zeros(field.n, field.box_size, Representation::Spectral)?;
    Cubic::new(field.n, m).apply(&field.data, C64::new(1.0, 0.0), &mut out.data);
    Ok(out)
}

/// Per-mode exponential coefficients of the fourth-order ETD Runge-Kutta scheme.
#[derive(Debug, Clone)]
pub struct EtdCoefficients {
    e: Vec<C64>,
    e2: Vec<C64>,
    q: Vec<C64>,
    f1: Vec<C64>,
    f2: Vec<C64>,
    f3: Vec<C64>,
}

impl EtdCoefficients {
    /// Evaluates the phi-functions as means over a unit circle around `L dt`,
    /// which avoids cancellation for small `|L dt|`.
    pub fn new(symbol: &[C64], dt: f64) -> Self {
        let len = symbol.len();
        let mut c = Self {
            e: Vec::with_capacity(len),
            e2: Vec::with_capacity(len),
            q: Vec::with_capacity(len),
            f1: Vec::with_capacity(len),
            f2: Vec::with_capacity(len),
            f3: Vec::with_capacity(len),
        };
        let roots: Vec<C64> = (0..CONTOUR_POINTS)
            .map(|j| C64::from_polar(1.0, 2.0 * PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64))
            .collect();
        let inv = 1.0 / CONTOUR_POINTS as f64;
        for &l in symbol {
            let lh = l * dt;
            c.e.push(lh.exp());
            c.e2.push((lh / 2.0).exp());
            let (mut q, mut f1, mut f2, mut f3) = (ZERO, ZERO, ZERO, ZERO);
            for &r in &roots {
                let z = lh + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += ((z / 2.0).exp() - 1.0) / z;
                f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                f2 += (2.0 + z + ez * (z - 2.0)) / z3;
                f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            c.q.push(q * inv * dt);
            c.f1.push(f1 * inv * dt);
            c.f2.push(f2 * inv * dt);
            c.f3.push(f3 * inv * dt);
        }
        c
    }
}

/// `L_k = -i |k|^2 - nu |k|^(2p)`, zero outside the retained band.
pub fn linear_symbol(n: usize, box_size: f64, nu: f64, hyper_order: u32) -> Vec<C64> {
    k_squared(n, box_size)
        .into_iter()
        .zip(band_mask(n))
        .map(|(k2, keep)| {
            if keep {
                C64::new(-nu * k2.powi(hyper_order as i32), -k2)
            } else {
                ZERO
            }
        })
        .collect()
}

/// Stepping workspace for one field.
#[derive(Clone)]
pub struct Stepper {
    n: usize,
    box_size: f64,
    dt: f64,
    coeffs: Arc<EtdCoefficients>,
    cubic: Cubic,
    nonlinear: bool,
    work: [Vec<C64>; 7],
}

impl Stepper {
    pub fn new(cfg: &NlsConfig) -> Result<Self, NlsError> {
        cfg.validate()?;
        let symbol = linear_symbol(cfg.resolution, cfg.box_size, cfg.nu, cfg.hyper_order);
        Ok(Self::with_coefficients(
            cfg.resolution,
            cfg.box_size,
            cfg.dt,
            Arc::new(EtdCoefficients::new(&symbol, cfg.dt)),
        ))
    }

    fn with_coefficients(n: usize, box_size: f64, dt: f64, coeffs: Arc<EtdCoefficients>) -> Self {
        let len = n * n;
        Self {
            n,
            box_size,
            dt,
            coeffs,
            cubic: Cubic::new(n, 3 * n / 2),
            nonlinear: true,
            work: std::array::from_fn(|_| vec![ZERO; len]),
        }
    }

    /// Test hook: with the nonlinear term off a step is the exact linear propagator.
    pub fn set_nonlinear(&mut self, on: bool) {
        self.nonlinear = on;
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn nonlinear_term(&mut self, psi: &[C64], out: &mut [C64]) {
        if self.nonlinear {
            self.cubic.apply(psi, C64::new(0.0, -1.0), out);
        } else {
            out.iter_mut().for_each(|v| *v = ZERO);
        }
    }

    /// Advances `psi_hat` in place by one step.
    pub fn step(&mut self, psi: &mut [C64]) {
        let c = self.coeffs.clone();
        let [nu, a, na, b, nb, cc, nc] = std::mem::take(&mut self.work);
        let (mut nu, mut a, mut na, mut b, mut nb, mut cc, mut nc) = (nu, a, na, b, nb, cc, nc);
        self.nonlinear_term(psi, &mut nu);
        for i in 0..psi.len() {
            a[i] = c.e2[i] * psi[i] + c.q[i] * nu[i];
        }
        self.nonlinear_term(&a, &mut na);
        for i in 0..psi.len() {
            b[i] = c.e2[i] * psi[i] + c.q[i] * na[i];
        }
        self.nonlinear_term(&b, &mut nb);
        for i in 0..psi.len() {
            cc[i] = c.e2[i] * a[i] + c.q[i] * (2.0 * nb[i] - nu[i]);
        }
        self.nonlinear_term(&cc, &mut nc);
        for i in 0..psi.len() {
            psi[i] = c.e[i] * psi[i]
                + c.f1[i] * nu[i]
                + 2.0 * c.f2[i] * (na[i] + nb[i])
                + c.f3[i] * nc[i];
        }
        self.work = [nu, a, na, b, nb, cc, nc];
    }

    /// Wave action, quadratic energy and Hamiltonian of `psi_hat`.
    pub fn invariants(&mut self, psi: &[C64]) -> (f64, f64, f64) {
        let k2 = k_squared(self.n, self.box_size);
        let waveaction: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
        let quad: f64 = psi.iter().zip(&k2).map(|(v, k)| k * v.norm_sqr()).sum();
        let quartic = self.cubic.quartic_mean(psi);
        (waveaction, quad, quad + 0.5 * quartic)
    }
}

/// One step of the fourth-order exponential Runge-Kutta scheme.
pub fn etdrk4_step(field: &ComplexField, cfg: &NlsConfig) -> Result<ComplexField, NlsError> {
    field.require_spectral()?;
    if field.n != cfg.resolution {
        return Err(NlsError::ResolutionMismatch {
            expected: cfg.resolution,
            found: field.n,
        });
    }
    let mut stepper = Stepper::new(cfg)?;
    let mut out = field.clone();
    stepper.step(&mut out.data);
    if out.data.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(NlsError::BlowUp {
            time: cfg.dt,
            member: 0,
            step: 1,
        });
    }
    Ok(out)
}

/// Angle- and ensemble-averaged wave action density on log-uniform shells.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpectrum {
    grid: Arc<LogFrequencyGrid>,
    /// `None` for shells that contain no lattice mode.
    values: Vec<Option<f64>>,
    /// Lattice modes per shell.
    modes: Vec<usize>,
    members: usize,
    time: f64,
    omega_max: f64,
}

impl EnsembleSpectrum {
    pub fn grid(&self) -> &Arc<LogFrequencyGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `k_max^2` of the retained band.
    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// Shell `i` spans `omega_i exp(+-h/2)`.
    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = self.grid.nodes()[i];
        let half = 0.5 * self.grid.log_step();
        (w * (-half).exp(), w * half.exp())
    }

    pub fn bin_width(&self, i: usize) -> f64 {
        let (lo, hi) = self.bin_edges(i);
        hi - lo
    }

    /// `sum N_i dw_i`; equals half the ensemble mean of `sum |psi_hat|^2`.
    pub fn total_waveaction(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| v * self.bin_width(i)))
            .sum()
    }

    /// Dense spectrum with missing shells filled by log-log interpolation
    /// between their nearest occupied neighbours (nearest value at the ends).
    pub fn to_spectrum(&self) -> Result<Spectrum, NlsError> {
        let present: Vec<usize> = (0..self.values.len()).filter(|&i| self.values[i].is_some()).collect();
        if present.is_empty() {
            return Err(NlsError::EmptyEnsemble);
        }
        let ln = self.grid.log_nodes();
        let get = |i: usize| self.values[i].unwrap();
        let mut out = Vec::with_capacity(self.values.len());
        let mut next = 0;
        for i in 0..self.values.len() {
            while next < present.len() && present[next] < i {
                next += 1;
            }
            let v = match self.values[i] {
                Some(v) => v,
                None if next == 0 => get(present[0]),
                None if next == present.len() => get(present[next - 1]),
                None => {
                    let (a, b) = (present[next - 1], present[next]);
                    let (va, vb) = (get(a), get(b));
                    let f = (ln[i] - ln[a]) / (ln[b] - ln[a]);
                    if va > 0.0 && vb > 0.0 {
                        (va.ln() + f * (vb.ln() - va.ln())).exp()
                    } else {
                        va + f * (vb - va)
                    }
                }
            };
            out.push(v);
        }
        Spectrum::new(self.grid.clone(), out, self.time).map_err(|e| NlsError::Config {
            field: "spectrum",
            message: e.to_string(),
        })
    }

    /// `omega,N,modes` with an empty `N` for missing shells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,N,modes\n");
        for (i, w) in self.grid.nodes().iter().enumerate() {
            match self.values[i] {
                Some(v) => s.push_str(&format!("{w:.17e},{v:.17e},{}\n", self.modes[i])),
                None => s.push_str(&format!("{w:.17e},,0\n")),
            }
        }
        s
    }
}

/// Bins `n(k) = (L/2pi)^2 <|psi_hat_k|^2>` into shells of `omega = |k|^2`.
///
/// A shell of width `dw` holding modes `k` gets
/// `N = (1/2) sum_k n(k) (2pi/L)^2 / dw`, the discrete form of
/// `N_omega = (1/2) int n(k) delta(|k|^2 - omega) d^2k`.
pub fn extract_spectrum(
    fields: &[ComplexField],
    grid: Arc<LogFrequencyGrid>,
    time: f64,
) -> Result<EnsembleSpectrum, NlsError> {
    let first = fields.first().ok_or(NlsError::EmptyEnsemble)?;
    let (n, box_size) = (first.n, first.box_size);
    for f in fields {
        if f.n != n {
            return Err(NlsError::ResolutionMismatch {
                expected: n,
                found: f.n,
            });
        }
        if f.box_size != box_size {
            return Err(NlsError::Config {
                field: "box_size",
                message: format!("ensemble mixes L = {box_size} and L = {}", f.box_size),
            });
        }
    }
    let spectral: Vec<ComplexField> = fields.iter().map(|f| f.to_spectral()).collect();
    let k2 = k_squared(n, box_size);
    let mut sums = vec![0.0; grid.len()];
    let mut modes = vec![0usize; grid.len()];
    let (ln0, h) = (grid.omega_min().ln(), grid.log_step());
    for (i, &w) in k2.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let b = ((w.ln() - ln0) / h).round();
        if b < 0.0 || b >= grid.len() as f64 {
            continue;
        }
        let b = b as usize;
        modes[b] += 1;
        sums[b] += spectral.iter().map(|f| f.data[i].norm_sqr()).sum::<f64>();
    }
    let m = fields.len() as f64;
    let half = 0.5 * h;
    let values = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(b, &w)| {
            // (L/2pi)^2 from n(k) cancels against the (2pi/L)^2 cell area
            (modes[b] > 0).then(|| 0.5 * sums[b] / m / (w * (half.exp() - (-half).exp())))
        })
        .collect();
    let k_max = band_limit(n) as f64 * 2.0 * PI / box_size;
    Ok(EnsembleSpectrum {
        grid,
        values,
        modes,
        members: fields.len(),
        time,
        omega_max: k_max * k_max,
    })
}

/// One ensemble member in flight.
#[derive(Debug, Clone, PartialEq)]
pub struct NlsMember {
    pub id: usize,
    pub seed: u64,
    pub step: u64,
    pub time: f64,
    pub field: ComplexField,
}

/// Ensemble means of the diagnostics at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantRow {
    pub t: f64,
    pub waveaction: f64,
    pub quad_energy: f64,
    pub hamiltonian: f64,
    /// `1 - waveaction / waveaction(0)`.
    pub dissipated: f64,
}

pub const INVARIANTS_HEADER: &str = "t,waveaction,quad_energy,hamiltonian,dissipated";

impl InvariantRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.t, self.waveaction, self.quad_energy, self.hamiltonian, self.dissipated
        )
    }
}

/// Receives run output as it is produced.
pub trait NlsObserver {
    fn invariants(&mut self, _row: &InvariantRow) {}
    fn spectrum(&mut self, _s: &EnsembleSpectrum) {}
    /// Called with the full ensemble at every output time.
    fn checkpoint(&mut self, _members: &[NlsMember]) {}
}

/// Collects everything in memory.
#[derive(Debug, Default, Clone)]
pub struct NlsRun {
    pub spectra: Vec<EnsembleSpectrum>,
    pub invariants: Vec<InvariantRow>,
}

impl NlsObserver for NlsRun {
    fn invariants(&mut self, row: &InvariantRow) {
        self.invariants.push(*row);
    }
    fn spectrum(&mut self, s: &EnsembleSpectrum) {
        self.spectra.push(s.clone());
    }
}

/// Initial ensemble; member `i` uses seed `seed + i`.
pub fn initial_members(cfg: &NlsConfig) -> Result<Vec<NlsMember>, NlsError> {
    (0..cfg.members)
        .map(|id| {
            let seed = cfg.seed.wrapping_add(id as u64);
            Ok(NlsMember {
                id,
                seed,
                step: 0,
                time: 0.0,
                field: init_random_phase(cfg, seed)?,
            })
        })
        .collect()
}

/// Output step numbers: 0, then the steps nearest `output_start * 10^(j / per_decade)`.
fn output_steps(cfg: &NlsConfig) -> Vec<u64> {
    let last = (cfg.t_final / cfg.dt).round() as u64;
    let mut out = vec![0];
    for j in 0.. {
        let t = cfg.output_start * 10f64.powf(j as f64 / cfg.outputs_per_decade as f64);
        let s = ((t / cfg.dt).round() as u64).min(last);
        if s > *out.last().unwrap() {
            out.push(s);
        }
        if t >= cfg.t_final {
            break;
        }
    }
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

pub fn run_nls(cfg: &NlsConfig) -> Result<NlsRun, NlsError> {
    let mut run = NlsRun::default();
    run_nls_with(cfg, None, &mut run)?;
    Ok(run)
}

/// Evolves the ensemble from `resume` (or the initial condition) to `t_final`.
///
/// On resume the dissipated fraction is measured against the initial
/// condition regenerated from the seeds.
pub fn run_nls_with(
    cfg: &NlsConfig,
    resume: Option<Vec<NlsMember>>,
    observer: &mut impl NlsObserver,
) -> Result<(), NlsError> {
    cfg.validate()?;
    let fresh = initial_members(cfg)?;
    let waveaction0 = fresh.iter().map(|m| m.field.waveaction()).sum::<f64>() / cfg.members as f64;
    let mut members = match resume {
        None => fresh,
        Some(ms) => {
            if ms.len() != cfg.members {
                return Err(NlsError::Checkpoint(format!(
                    "{} members in checkpoints, {} configured",
                    ms.len(),
                    cfg.members
                )));
            }
            let step = ms[0].step;
            for m in &ms {
                if m.field.n != cfg.resolution {
                    return Err(NlsError::ResolutionMismatch {
                        expected: cfg.resolution,
                        found: m.field.n,
                    });
                }
                if m.step != step {
                    return Err(NlsError::Checkpoint("members are at different steps".into()));
                }
                m.field.require_spectral()?;
            }
            ms
        }
    };
    let grid = Arc::new(cfg.spectrum_grid()?);
    let base = Stepper::new(cfg)?;
    let mut steppers: Vec<Stepper> = (0..cfg.members).map(|_| base.clone()).collect();
    let start = members[0].step;
    let every = cfg.invariants_every;

    if start == 0 {
        record(&members, &mut steppers, waveaction0, observer);
        output(&members, &grid, observer)?;
    }
    let mut step = start;
    for target in output_steps(cfg).into_iter().filter(|&s| s > start) {
        while step < target {
            let next = ((step / every + 1) * every).min(target);
            advance(&mut members, &mut steppers, next, cfg.dt)?;
            step = next;
            record(&members, &mut steppers, waveaction0, observer);
        }
        output(&members, &grid, observer)?;
    }
    Ok(())
}

fn record(
    members: &[NlsMember],
    steppers: &mut [Stepper],
    waveaction0: f64,
    observer: &mut impl NlsObserver,
) {
    let mut acc = (0.0, 0.0, 0.0);
    for (m, st) in members.iter().zip(steppers.iter_mut()) {
        let (a, q, h) = st.invariants(&m.field.data);
        acc = (acc.0 + a, acc.1 + q, acc.2 + h);
    }
    let k = members.len() as f64;
    let waveaction = acc.0 / k;
    observer.invariants(&InvariantRow {
        t: members[0].time,
        waveaction,
        quad_energy: acc.1 / k,
        hamiltonian: acc.2 / k,
        dissipated: 1.0 - waveaction / waveaction0,
    });
}

fn output(
    members: &[NlsMember],
    grid: &Arc<LogFrequencyGrid>,
    observer: &mut impl NlsObserver,
) -> Result<(), NlsError> {
    let fields: Vec<ComplexField> = members.iter().map(|m| m.field.clone()).collect();
    observer.spectrum(&extract_spectrum(&fields, grid.clone(), members[0].time)?);
    observer.checkpoint(members);
    Ok(())
}

/// Steps every member to `target`; members run in parallel.
fn advance(
    members: &mut [NlsMember],
    steppers: &mut [Stepper],
    target: u64,
    dt: f64,
) -> Result<(), NlsError> {
    members
        .par_iter_mut()
        .zip(steppers.par_iter_mut())
        .try_for_each(|(m, st)| {
            while m.step < target {
                st.step(&mut m.field.data);
                m.step += 1;
                m.time = m.step as f64 * dt;
            }
            // a non-finite value anywhere poisons the sum
            if m.field.waveaction().is_finite() {
                Ok(())
            } else {
                Err(NlsError::BlowUp {
                    time: m.time,
                    member: m.id,
                    step: m.step,
                })
            }
        })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"WCNLSCK1";

/// Writes a member as a binary checkpoint.
///
/// Layout, all little-endian: 8-byte magic `WCNLSCK1`; `n: u64`; `L: f64`;
/// `t: f64`; `seed: u64`; `member: u64`; `step: u64`; then `n * n` pairs
/// `(re: f64, im: f64)` of `psi_hat` in row-major order (`ky` outer).
pub fn write_checkpoint(path: &Path, member: &NlsMember) -> Result<(), NlsError> {
    member.field.require_spectral()?;
    let f = &member.field;
    let mut buf = Vec::with_capacity(56 + 16 * f.data.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(f.n as u64).to_le_bytes());
    buf.extend_from_slice(&f.box_size.to_le_bytes());
    buf.extend_from_slice(&member.time.to_le_bytes());
    buf.extend_from_slice(&member.seed.to_le_bytes());
    buf.extend_from_slice(&(member.id as u64).to_le_bytes());
    buf.extend_from_slice(&member.step.to_le_bytes());
    for v in &f.data {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    let err = |e: std::io::Error| NlsError::Checkpoint(format!("{}: {e}", path.display()));
    let mut file = std::fs::File::create(path).map_err(err)?;
    file.write_all(&buf).map_err(err)
}

pub fn read_checkpoint(path: &Path) -> Result<NlsMember, NlsError> {
    let err = |e: std::io::Error| NlsError::Checkpoint(format!("{}: {e}", path.display()));
    let mut buf = Vec::new();
    std::fs::File::open(path).map_err(err)?.read_to_end(&mut buf).map_err(err)?;
    let bad = |m: &str| NlsError::Checkpoint(format!("{}: {m}", path.display()));
    if buf.len() < 56 || &buf[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let word = |i: usize| <[u8; 8]>::try_from(&buf[8 + 8 * i..16 + 8 * i]).unwrap();
    let n = u64::from_le_bytes(word(0)) as usize;
    let box_size = f64::from_le_bytes(word(1));
    let time = f64::from_le_bytes(word(2));
    let seed = u64::from_le_bytes(word(3));
    let id = u64::from_le_bytes(word(4)) as usize;
    let step = u64::from_le_bytes(word(5));
    if n.checked_mul(n).and_then(|nn| nn.checked_mul(16)) != Some(buf.len() - 56) {
        return Err(bad("payload length does not match the header"));
    }
    let data = buf[56..]
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(NlsMember {
        id,
        seed,
        step,
        time,
        field: ComplexField::from_data(n, box_size, data, Representation::Spectral)?,
    })
}
