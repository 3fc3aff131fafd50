//! Four-wave interaction kernel in the frequency representation, power-law
//! convergence scans of the collision integral and the nonlocal reductions
//! at low and high frequency.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::KernelError;
use crate::spectrum::Spectrum;

/// Default clamp distance of the modulus from 1 for single-point evaluations.
pub const Q_CLAMP: f64 = 1e-14;

/// Complete elliptic integral of the first kind `K(q)` by the
/// arithmetic-geometric mean `K = pi / (2 AGM(1, q'))`.
pub fn elliptic_k(q: f64) -> Result<f64, KernelError> {
    if !(0.0..1.0).contains(&q) {
        return Err(KernelError::ModulusOutOfRange(q));
    }
    Ok(elliptic_k_complement(((1.0 - q) * (1.0 + q)).sqrt()))
}

/// `K` as a function of the complementary modulus `q' = sqrt(1 - q^2)`.
/// Accurate all the way to `q' -> 0`, where `K ~ ln(4 / q')`.
pub fn elliptic_k_complement(qp: f64) -> f64 {
    if qp <= 0.0 {
        return f64::INFINITY;
    }
    let (mut a, mut b) = (1.0f64, qp);
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let m = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = m;
    }
    PI / (a + b)
}

/// Resonant quartet `omega + omega1 = omega2 + omega3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartet {
    pub omega: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
}

impl Quartet {
    /// Builds the quartet with `omega3` fixed by resonance.
    pub fn new(omega: f64, omega1: f64, omega2: f64) -> Result<Self, KernelError> {
        let omega3 = omega + omega1 - omega2;
        if omega3 < 0.0 {
            return Err(KernelError::NegativeOmega3(omega3));
        }
        if !(omega >= 0.0 && omega1 >= 0.0 && omega2 >= 0.0) {
            return Err(KernelError::NonPositiveFrequency([
                omega, omega1, omega2, omega3,
            ]));
        }
        Ok(Self {
            omega,
            omega1,
            omega2,
            omega3,
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.omega, self.omega1, self.omega2, self.omega3]
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            omega: lambda * self.omega,
            omega1: lambda * self.omega1,
            omega2: lambda * self.omega2,
            omega3: lambda * self.omega3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub s1: f64,
    pub q: f64,
    /// complementary modulus `sqrt(1 - q^2)`, after clamping
    pub q_complement: f64,
    pub k_of_q: f64,
    pub s: f64,
}

/// `u = sqrt(omega omega1)`, `v = sqrt(omega2 omega3)` and `q' = |u - v| / (u + v)`.
///
/// `u - v` is formed as `(omega - omega2)(omega1 - omega2) / (u + v)`, which
/// holds on resonance and avoids the cancellation near `q = 1`.
fn kernel_parts(w: &Quartet) -> (f64, f64, f64) {
    let u = (w.omega * w.omega1).sqrt();
    let v = (w.omega2 * w.omega3).sqrt();
    let sum = u + v;
    let diff = (w.omega - w.omega2) * (w.omega1 - w.omega2) / sum;
    (u, v, diff.abs() / sum)
}

/// Kernel `S = S1 K(q)` with `S1 = 4 / (pi (sqrt(omega omega1) + sqrt(omega2 omega3)))`
/// and `q = 2 (omega omega1 omega2 omega3)^(1/4) / (sqrt(omega omega1) + sqrt(omega2 omega3))`.
///
/// Quartets with `q` numerically at 1 are clamped to `q = 1 - Q_CLAMP`.
pub fn kernel_s(w: &Quartet) -> Result<KernelValue, KernelError> {
    let a = w.as_array();
    if a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(KernelError::NonPositiveFrequency(a));
    }
    let (u, v, qp_raw) = kernel_parts(w);
    let q_max = 1.0 - Q_CLAMP;
    let qp_min = ((1.0 - q_max) * (1.0 + q_max)).sqrt();
    let qp = qp_raw.max(qp_min);
    let q = (2.0 * (u * v).sqrt() / (u + v)).min(q_max);
    let s1 = 4.0 / (PI * (u + v));
    let k = elliptic_k_complement(qp);
    Ok(KernelValue {
        s1,
        q,
        q_complement: qp,
        k_of_q: k,
        s: s1 * k,
    })
}

/// `S` without clamping; infinite exactly on the logarithmic singularity.
/// Used by the convergence scans, whose sample points avoid it.
fn kernel_unclamped(w: &Quartet) -> f64 {
    let (u, v, qp) = kernel_parts(w);
    4.0 / (PI * (u + v)) * elliptic_k_complement(qp)
}

/// `1/N + 1/N1 - 1/N2 - 1/N3` for the quartet's wave action values.
pub fn detailed_balance(n: [f64; 4]) -> f64 {
    (1.0 / n[0] - 1.0 / n[2]) + (1.0 / n[1] - 1.0 / n[3])
}

/// Limiting regions of the collision integral for `N = omega^-x`, `omega = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// `omega1, omega2, omega3 -> omega`
    A,
    /// `omega1 << omega2 ~ omega3 ~ omega`
    B,
    /// `omega1, omega2 << omega3 ~ omega`
    C,
    /// `omega << omega1, omega2, omega3`
    D,
    /// `omega3 ~ omega << omega1 ~ omega2`
    E,
}

impl Region {
    pub const ALL: [Region; 5] = [Region::A, Region::B, Region::C, Region::D, Region::E];

    pub fn tag(self) -> char {
        match self {
            Region::A => 'a',
            Region::B => 'b',
            Region::C => 'c',
            Region::D => 'd',
            Region::E => 'e',
        }
    }

    pub fn from_tag(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.tag() == c)
    }

    /// Scale range used when none is given.
    pub fn default_scales(self) -> (f64, f64) {
        match self {
            Region::A => (1e-6, 1e-3),
            Region::B | Region::C => (1e-12, 1e-8),
            Region::D | Region::E => (1e8, 1e14),
        }
    }

    /// Predicted power of `r` of the radially reduced integrand (Jacobian
    /// included; for (a) after dividing out the `ln r` factor). `None` where
    /// the bracket vanishes identically.
    pub fn predicted_exponent(self, x: f64) -> Option<f64> {
        if bracket_vanishes(x) || self == Region::E {
            return None;
        }
        Some(match self {
            Region::A => 3.0,
            Region::B => {
                if x > 0.0 {
                    -x
                } else {
                    0.0
                }
            }
            Region::C => {
                if x < 1.0 {
                    0.5 - x
                } else {
                    1.5 - 2.0 * x
                }
            }
            Region::D => {
                if x < 0.0 {
                    -3.0 * x
                } else {
                    -2.0 * x
                }
            }
            Region::E => unreachable!(),
        })
    }

    /// Whether a reduced integrand `~ r^p` is integrable in this region:
    /// at `r -> 0` for (a)-(c), at `r -> infinity` for (d).
    fn integrable(self, p: f64) -> bool {
        match self {
            Region::D => p < -1.0 - MARGINAL,
            _ => p > -1.0 + MARGINAL,
        }
    }
}

/// Exponents within this distance of the integrability threshold are
/// treated as (logarithmically) divergent.
pub const MARGINAL: f64 = 0.02;

/// At `x = 0` and `x = 1` the bracket `omega^x + omega1^x - omega2^x - omega3^x`
/// is zero on every resonant quartet (the latter by resonance itself).
fn bracket_vanishes(x: f64) -> bool {
    x == 0.0 || x == 1.0
}

/// `e^{xa} - e^{xb}` without losing digits when `a` and `b` are close.
fn pow_diff(x: f64, a: f64, b: f64) -> f64 {
    (x * b).exp() * (x * (a - b)).exp_m1()
}

/// Integrand of the power-law collision integral at `omega = 1`, given
/// `ln` of the four frequencies (computed accurately by the caller).
fn power_law_integrand(x: f64, w: &Quartet, logs: [f64; 4]) -> f64 {
    if bracket_vanishes(x) {
        return 0.0;
    }
    let [l, l1, l2, l3] = logs;
    let bracket = pow_diff(x, l, l3) + pow_diff(x, l1, l2);
    if bracket == 0.0 {
        return 0.0;
    }
    let weight = (-x * (l + l1 + l2 + l3)).exp();
    kernel_unclamped(w) * weight * bracket
}

fn quartet_unit(omega1: f64, omega2: f64, omega3: f64) -> Quartet {
    Quartet {
        omega: 1.0,
        omega1,
        omega2,
        omega3,
    }
}

const ANGLES: usize = 512;

/// Radially reduced magnitude `I(r) = integral |F| r dtheta` (or the window
/// integral for (b)). Magnitudes avoid spurious cancellation between sectors.
fn reduced_integrand(region: Region, x: f64, r: f64) -> f64 {
    match region {
        Region::A => {
            // midpoints with ANGLES a multiple of 8 never hit the singular
            // directions theta = 0, pi/4, pi, 5pi/4
            let dth = 2.0 * PI / ANGLES as f64;
            let mut acc = 0.0;
            for j in 0..ANGLES {
                let th = (j as f64 + 0.5) * dth;
                let (a, b) = (r * th.cos(), r * th.sin());
                let w = quartet_unit(1.0 + a, 1.0 + b, 1.0 + a - b);
                let logs = [0.0, a.ln_1p(), b.ln_1p(), (a - b).ln_1p()];
                acc += power_law_integrand(x, &w, logs).abs();
            }
            acc * dth * r
        }
        Region::B => {
            let (lo, hi) = (0.2, 0.8);
            let m = ANGLES;
            let d = (hi - lo) / m as f64;
            let mut acc = 0.0;
            for j in 0..m {
                let w2 = lo + (j as f64 + 0.5) * d;
                let w3 = (1.0 - w2) + r;
                let w = quartet_unit(r, w2, w3);
                let logs = [0.0, r.ln(), w2.ln(), w3.ln()];
                acc += power_law_integrand(x, &w, logs).abs();
            }
            acc * d
        }
        Region::C | Region::D => {
            let (t0, t1) = match region {
                Region::C => (0.0, FRAC_PI_2),
                _ => (0.0, PI / 4.0),
            };
            let delta = 0.02 * (t1 - t0);
            let (t0, t1) = (t0 + delta, t1 - delta);
            let dth = (t1 - t0) / ANGLES as f64;
            let mut acc = 0.0;
            for j in 0..ANGLES {
                let th = t0 + (j as f64 + 0.5) * dth;
                let (w1, w2) = (r * th.cos(), r * th.sin());
                let d12 = w1 - w2;
                let w3 = 1.0 + d12;
                let w = quartet_unit(w1, w2, w3);
                let logs = [0.0, w1.ln(), w2.ln(), d12.ln_1p()];
                acc += power_law_integrand(x, &w, logs).abs();
            }
            acc * dth * r
        }
        Region::E => {
            // the exact ray omega2 = omega1, omega3 = omega
            let w = quartet_unit(r, r, 1.0);
            power_law_integrand(x, &w, [0.0, r.ln(), r.ln(), 0.0]).abs()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionScan {
    pub region: Region,
    pub x: f64,
    /// Fitted power of `r`; `None` when the integrand vanishes identically.
    pub measured: Option<f64>,
    pub predicted: Option<f64>,
    pub r_squared: f64,
    pub identically_zero: bool,
    pub convergent: bool,
}

/// Samples the reduced integrand of `region` on log-spaced `r` over
/// `scales` and fits its power law.
pub fn region_scan(x: f64, region: Region, scales: (f64, f64)) -> Result<RegionScan, KernelError> {
    let (lo, hi) = (scales.0.min(scales.1), scales.0.max(scales.1));
    if !(lo > 0.0) || (hi / lo).log10() < 3.0 - 1e-9 {
        return Err(KernelError::ScaleRange { lo, hi });
    }
    const SAMPLES: usize = 25;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut xs = Vec::with_capacity(SAMPLES);
    let mut ys = Vec::with_capacity(SAMPLES);
    let mut all_zero = true;
    for i in 0..SAMPLES {
        let lr = llo + (lhi - llo) * i as f64 / (SAMPLES - 1) as f64;
        let r = lr.exp();
        let v = reduced_integrand(region, x, r);
        if v != 0.0 {
            all_zero = false;
        }
        let v = if region == Region::A { v / lr.abs() } else { v };
        xs.push(lr);
        ys.push(v.ln());
    }
    let predicted = region.predicted_exponent(x);
    if all_zero {
        return Ok(RegionScan {
            region,
            x,
            measured: None,
            predicted,
            r_squared: 1.0,
            identically_zero: true,
            convergent: true,
        });
    }
    let (slope, icpt, r2) = linear_fit(&xs, &ys);
    // a nearly flat integrand leaves no variance to explain; accept it when
    // the residual scatter is tiny instead
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| (b - slope * a - icpt).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    let flat = rms < 1e-2;
    if !(r2 >= 0.99 || flat) || !slope.is_finite() {
        return Err(KernelError::FitFailure {
            region: region.tag(),
            x,
            r_squared: r2,
        });
    }
    Ok(RegionScan {
        region,
        x,
        measured: Some(slope),
        predicted,
        r_squared: if flat { 1.0 } else { r2 },
        identically_zero: false,
        convergent: region.integrable(slope),
    })
}

/// Least squares `y = a x + b`; returns `(a, b, R^2)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// A contiguous run of convergent samples, resolved to one sweep step.
///
/// The lower end is reported open at the last divergent sample below the
/// run (or closed at the sweep start); the upper end closed at the last
/// convergent sample, with the first divergent sample above kept in `next`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub next: Option<f64>,
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let open = if self.lo_closed { '[' } else { '(' };
        write!(f, "{open}{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceWindow {
    pub xs: Vec<f64>,
    pub scans: Vec<RegionScan>,
    /// Overall verdict per sampled `x`.
    pub convergent: Vec<bool>,
    /// Longest run of convergent samples.
    pub interval: Option<Interval>,
    /// Convergent samples outside the main run (e.g. `x = 0`, where the
    /// bracket vanishes identically).
    pub isolated: Vec<f64>,
}

/// Sweep points `x_min + k step`, rounded to suppress accumulation error.
pub fn sweep_points(x_min: f64, x_max: f64, step: f64) -> Vec<f64> {
    let n = ((x_max - x_min) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| ((x_min + k as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

/// Main run of convergent samples as an interval, plus the other convergent samples.
pub fn window_of(xs: &[f64], ok: &[bool]) -> (Option<Interval>, Vec<f64>) {
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < xs.len() {
        if ok[i] {
            let start = i;
            while i + 1 < xs.len() && ok[i + 1] {
                i += 1;
            }
            if best.is_none_or(|(a, b)| i - start > b - a) {
                best = Some((start, i));
            }
        }
        i += 1;
    }
    let Some((a, b)) = best else {
        return (None, Vec::new());
    };
    let interval = Interval {
        lo: if a > 0 { xs[a - 1] } else { xs[a] },
        lo_closed: a == 0,
        hi: xs[b],
        next: xs.get(b + 1).copied(),
    };
    let isolated = (0..xs.len())
        .filter(|&k| ok[k] && (k < a || k > b))
        .map(|k| xs[k])
        .collect();
    (Some(interval), isolated)
}

/// Per-region scans over the sweep and the overall convergence window.
pub fn convergence_window(x_min: f64, x_max: f64, step: f64) -> Result<ConvergenceWindow, KernelError> {
    let xs = sweep_points(x_min, x_max, step);
    let per_x: Vec<Result<Vec<RegionScan>, KernelError>> = {
        use rayon::prelude::*;
        xs.par_iter()
            .map(|&x| {
                Region::ALL
                    .iter()
                    .map(|&r| region_scan(x, r, r.default_scales()))
                    .collect()
            })
            .collect()
    };
    let mut scans = Vec::with_capacity(xs.len() * Region::ALL.len());
    let mut convergent = Vec::with_capacity(xs.len());
    for row in per_x {
        let row = row?;
        convergent.push(row.iter().all(|s| s.convergent));
        scans.extend(row);
    }
    let (interval, isolated) = window_of(&xs, &convergent);
    Ok(ConvergenceWindow {
        xs,
        scans,
        convergent,
        interval,
        isolated,
    })
}

impl ConvergenceWindow {
    /// Convergence interval of a single region over the same sweep.
    pub fn region_interval(&self, region: Region) -> Option<Interval> {
        let ok: Vec<bool> = self
            .scans
            .iter()
            .filter(|s| s.region == region)
            .map(|s| s.convergent)
            .collect();
        window_of(&self.xs, &ok).0
    }
}

/// Low-frequency nonlocal coefficients of `dN/dt = A + B N` with a
/// refinement-doubling error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlocalCoeffs {
    pub a: f64,
    pub b: f64,
    pub a_error: f64,
    pub b_error: f64,
}

/// Fraction of the integral allowed on the outermost grid nodes before the
/// input is declared non-integrable over the grid.
const TAIL_TOLERANCE: f64 = 1e-3;

/// Trapezoid weights in `omega` on a log grid expressed through `ln omega`:
/// `w_i = omega_i * dlog` with halved end points, optionally every `stride`-th node.
fn log_weights(omega: &[f64], dlog: f64, stride: usize) -> Vec<(usize, f64)> {
    let idx: Vec<usize> = (0..omega.len()).step_by(stride).collect();
    let last = *idx.last().expect("grid is non-empty");
    let h = dlog * stride as f64;
    idx.iter()
        .map(|&i| {
            let end = i == 0 || i == last;
            (i, omega[i] * h * if end { 0.5 } else { 1.0 })
        })
        .collect()
}

fn lowfreq_sums(s: &Spectrum, stride: usize) -> (f64, f64, f64) {
    let omega = s.omega();
    let n = s.values();
    let wts = log_weights(omega, s.grid().log_step(), stride);
    let last = wts.len() - 1;
    let (mut a, mut b, mut edge) = (0.0, 0.0, 0.0);
    let mut total = 0.0;
    for (p, &(i, wi)) in wts.iter().enumerate() {
        let (w2, n2) = (omega[i], n[i]);
        for (q, &(j, wj)) in wts.iter().enumerate() {
            let (w3, n3) = (omega[j], n[j]);
            let n1 = s.interpolate(w2 + w3);
            let k = wi * wj / (2.0 * (w2 * w3).sqrt());
            let fa = k * n1 * n2 * n3;
            let fb = k * (n2 * n3 - n1 * n3 - n1 * n2);
            a += fa;
            b += fb;
            let mag = fa.abs() + fb.abs();
            total += mag;
            if p == 0 || q == 0 || p == last || q == last {
                edge += mag;
            }
        }
    }
    (a, b, if total > 0.0 { edge / total } else { 0.0 })
}

/// `A = integral N1 N2 N3 / (2 sqrt(omega2 omega3))` and
/// `B = integral (N2 N3 - N1 N3 - N1 N2) / (2 sqrt(omega2 omega3))` over
/// `(omega2, omega3)` with `omega1 = omega2 + omega3`, on the spectrum's grid.
pub fn nonlocal_lowfreq_coeffs(s: &Spectrum) -> Result<NonlocalCoeffs, KernelError> {
    let (a, b, edge) = lowfreq_sums(s, 1);
    if edge > TAIL_TOLERANCE {
        return Err(KernelError::NonIntegrable(format!(
            "{:.2e} of the integrand sits on the grid boundary",
            edge
        )));
    }
    let (ac, bc, _) = lowfreq_sums(s, 2);
    Ok(NonlocalCoeffs {
        a,
        b,
        a_error: (a - ac).abs() / 3.0,
        b_error: (b - bc).abs() / 3.0,
    })
}

/// Self-similar plateau `A / (a - B)` of the nonlocal low-frequency equation.
pub fn plateau_level(a_exponent: f64, coeffs: &NonlocalCoeffs) -> Result<f64, KernelError> {
    if a_exponent <= coeffs.b {
        return Err(KernelError::NoPlateau {
            a: a_exponent,
            b: coeffs.b,
        });
    }
    Ok(coeffs.a / (a_exponent - coeffs.b))
}

const PHI_POINTS: usize = 4096;

/// Right-hand side of the nonlocal three-wave equation at high frequency,
/// `C integral (R^omega_{2,3} - R^3_{2,omega} - R^2_{3,omega}) domega2 domega3`
/// with `C = (1/2) integral N domega`.
///
/// The first term is integrated in `omega2 = omega sin^2 phi`, which removes
/// the inverse square-root endpoints; the other two are equal and are
/// integrated over the grid nodes in `ln omega2`.
pub fn nonlocal_uv_rhs(s: &Spectrum, omega: f64) -> Result<f64, KernelError> {
    if !(omega >= s.grid().omega_min() && omega <= s.grid().omega_max()) {
        return Err(KernelError::NonIntegrable(format!(
            "omega = {omega} lies outside the grid"
        )));
    }
    let c = 0.5 * s.total_waveaction();
    let n_w = s.interpolate(omega);
    // R^omega_{2,3}: midpoint rule in phi on (0, pi/2)
    let dphi = FRAC_PI_2 / PHI_POINTS as f64;
    let mut t1 = 0.0;
    for j in 0..PHI_POINTS {
        let phi = (j as f64 + 0.5) * dphi;
        let (sn, cs) = (phi.sin(), phi.cos());
        let n2 = s.interpolate(omega * sn * sn);
        let n3 = s.interpolate(omega * cs * cs);
        t1 += n2 * n3 - n_w * (n2 + n3);
    }
    t1 *= 2.0 * dphi;
    // R^3_{2,omega}: omega3 = omega2 + omega
    let grid = s.omega();
    let wts = log_weights(grid, s.grid().log_step(), 1);
    let (mut t2, mut mag, mut edge) = (0.0, 0.0, 0.0);
    let last = wts.len() - 1;
    for (p, &(i, wi)) in wts.iter().enumerate() {
        let (w2, n2) = (grid[i], s.values()[i]);
        let n3 = s.interpolate(w2 + omega);
        let f = wi * (n2 * n_w - n3 * (n_w + n2)) / (w2 * omega).sqrt();
        t2 += f;
        mag += f.abs();
        if p == 0 || p == last {
            edge += f.abs();
        }
    }
    if mag > 0.0 && edge / mag > TAIL_TOLERANCE {
        return Err(KernelError::NonIntegrable(format!(
            "{:.2e} of the omega2 integrand sits on the grid boundary",
            edge / mag
        )));
    }
    Ok(c * (t1 - 2.0 * t2))
}
