//! Cooling kinematics and self-similarity diagnostics: RJ estimators, front
//! trackers, blowup norms `|W_g|`, rescaled profiles and scaling-law fits.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::spectrum::{weighted_profile, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RjMethod {
    /// argmax of `omega^(1/2) N`
    Peak,
    /// closed form from the conserved totals and the right front
    Conservation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RjFit {
    pub temperature: f64,
    pub chemical_potential: f64,
    pub method: RjMethod,
    pub sigma: Option<f64>,
}

/// Vertex of the parabola through `(-h, ym), (0, y0), (h, yp)`: `(offset, value)`.
fn parabola_peak(ym: f64, y0: f64, yp: f64, h: f64) -> (f64, f64) {
    let curv = ym - 2.0 * y0 + yp;
    if curv >= 0.0 {
        return (0.0, y0);
    }
    let d = 0.5 * (ym - yp) / curv;
    (d * h, y0 - 0.25 * (ym - yp) * d)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `mu = argmax W`, `T = 2 sqrt(mu) max W` with `W = omega^(1/2) N`, the
/// maximum refined by a parabola in `ln omega`.
pub fn fit_rj_peak(s: &Spectrum) -> Result<RjFit, AnalysisError> {
    let w = weighted_profile(s, 0.0);
    let i = argmax(&w);
    if i == 0 || i + 1 == w.len() {
        return Err(AnalysisError::NoFit);
    }
    let h = s.grid().log_step();
    let (dk, wmax) = parabola_peak(w[i - 1], w[i], w[i + 1], h);
    let mu = s.omega()[i] * dk.exp();
    Ok(RjFit {
        temperature: 2.0 * mu.sqrt() * wmax,
        chemical_potential: mu,
        method: RjMethod::Peak,
        sigma: None,
    })
}

/// `T^ = E0 / w+`, `mu^ = w+ exp(-w+ / omega0)` with `omega0 = E0 / N0`.
pub fn fit_rj_conservation(e0: f64, n0: f64, omega_hat_plus: f64) -> Result<RjFit, AnalysisError> {
    if !(e0 > 0.0 && n0 > 0.0 && omega_hat_plus > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "E0, N0 and the front must be positive (got {e0}, {n0}, {omega_hat_plus})"
        )));
    }
    let omega0 = e0 / n0;
    Ok(RjFit {
        temperature: e0 / omega_hat_plus,
        chemical_potential: omega_hat_plus * (-omega_hat_plus / omega0).exp(),
        method: RjMethod::Conservation,
        sigma: None,
    })
}

fn check_fraction(name: &str, v: f64) -> Result<(), AnalysisError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::InvalidArgument(format!(
            "{name} must lie in (0, 1), got {v}"
        )))
    }
}

/// Rightmost downward crossing of `E = omega N` through `sigma max E`,
/// linear in `(ln omega, E)`.
pub fn front_right(s: &Spectrum, sigma: f64) -> Result<f64, AnalysisError> {
    check_fraction("sigma", sigma)?;
    let e: Vec<f64> = s.omega().iter().zip(s.values()).map(|(w, n)| w * n).collect();
    let level = sigma * e[argmax(&e)];
    let i = (0..e.len()).rev().find(|&i| e[i] >= level).expect("max reaches the level");
    if i + 1 == e.len() {
        return Err(AnalysisError::NoFront { side: "right" });
    }
    let k = s.grid().log_nodes();
    let f = (e[i] - level) / (e[i] - e[i + 1]);
    Ok((k[i] + f * (k[i + 1] - k[i])).exp())
}

/// Leftmost upward crossing of `N` through `sigma_tilde max N`.
pub fn front_left(s: &Spectrum, sigma_tilde: f64) -> Result<f64, AnalysisError> {
    check_fraction("sigma_tilde", sigma_tilde)?;
    let n = s.values();
    let level = sigma_tilde * s.max_value();
    let i = (0..n.len()).find(|&i| n[i] >= level).expect("max reaches the level");
    if i == 0 {
        return Err(AnalysisError::NoFront { side: "left" });
    }
    let k = s.grid().log_nodes();
    let f = (level - n[i - 1]) / (n[i] - n[i - 1]);
    Ok((k[i - 1] + f * (k[i] - k[i - 1])).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteFronts {
    pub omega_minus: f64,
    pub omega_plus: f64,
    /// the support reaches the first or last node
    pub touches_boundary: bool,
}

/// Outermost nodes with `N > floor_fraction * max N`.
pub fn absolute_fronts(s: &Spectrum, floor_fraction: f64) -> Result<AbsoluteFronts, AnalysisError> {
    check_fraction("floor_fraction", floor_fraction)?;
    let n = s.values();
    let level = floor_fraction * s.max_value();
    let lo = n.iter().position(|&v| v > level).ok_or(AnalysisError::NoFit)?;
    let hi = n.iter().rposition(|&v| v > level).ok_or(AnalysisError::NoFit)?;
    Ok(AbsoluteFronts {
        omega_minus: s.omega()[lo],
        omega_plus: s.omega()[hi],
        touches_boundary: lo == 0 || hi + 1 == n.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontEstimate {
    pub time: f64,
    pub omega_hat_minus: Option<f64>,
    pub omega_hat_plus: Option<f64>,
    pub omega_minus: Option<f64>,
    pub omega_plus: Option<f64>,
    pub sigma: f64,
    pub sigma_tilde: f64,
}

/// All fronts of one snapshot; missing crossings are `None`. Absolute fronts
/// are only reported when `floor_fraction` is given and the support is interior.
pub fn estimate_fronts(
    s: &Spectrum,
    sigma: f64,
    sigma_tilde: f64,
    floor_fraction: Option<f64>,
) -> Result<FrontEstimate, AnalysisError> {
    let soft = |r: Result<f64, AnalysisError>| match r {
        Ok(v) => Ok(Some(v)),
        Err(AnalysisError::NoFront { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    let abs = match floor_fraction {
        Some(f) => Some(absolute_fronts(s, f)?).filter(|a| !a.touches_boundary),
        None => None,
    };
    Ok(FrontEstimate {
        time: s.time(),
        omega_hat_minus: soft(front_left(s, sigma_tilde))?,
        omega_hat_plus: soft(front_right(s, sigma))?,
        omega_minus: abs.map(|a| a.omega_minus),
        omega_plus: abs.map(|a| a.omega_plus),
        sigma,
        sigma_tilde,
    })
}

/// Per-snapshot cooling kinematics: both RJ estimators and the fronts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub time: f64,
    pub peak: Option<RjFit>,
    pub conservation: Option<RjFit>,
    pub fronts: FrontEstimate,
}

pub fn kinematics(
    s: &Spectrum,
    e0: f64,
    n0: f64,
    sigma: f64,
    sigma_tilde: f64,
    floor_fraction: Option<f64>,
) -> Result<Kinematics, AnalysisError> {
    let fronts = estimate_fronts(s, sigma, sigma_tilde, floor_fraction)?;
    let peak = match fit_rj_peak(s) {
        Ok(f) => Some(f),
        Err(AnalysisError::NoFit) => None,
        Err(e) => return Err(e),
    };
    let conservation = match fronts.omega_hat_plus {
        Some(w) => Some(RjFit {
            sigma: Some(sigma),
            ..fit_rj_conservation(e0, n0, w)?
        }),
        None => None,
    };
    Ok(Kinematics {
        time: s.time(),
        peak,
        conservation,
        fronts,
    })
}

/// Least-squares fit result over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawFit {
    /// exponent of a power law, or `C` of a stretched exponential
    pub rate: f64,
    /// prefactor of a power law, or the log offset of a stretched exponential
    pub prefactor: f64,
    /// RMS of the log deviations
    pub residual: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// A scalar observable in time together with its last fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: Option<LawFit>,
}

impl ScalingSeries {
    pub fn new(name: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self, AnalysisError> {
        if times.len() != values.len() {
            return Err(AnalysisError::InvalidArgument(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AnalysisError::InvalidArgument(
                "times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            times,
            values,
            fit: None,
        })
    }

    /// Last decade of the data.
    pub fn default_window(&self) -> Option<(f64, f64)> {
        let t = *self.times.last()?;
        Some((t / 10.0, t))
    }

    pub fn fit_powerlaw(&mut self, window: Option<(f64, f64)>) -> Result<LawFit, AnalysisError> {
        let w = window.or(self.default_window()).ok_or(AnalysisError::TooFewPoints {
            needed: 4,
            found: 0,
        })?;
        let f = fit_powerlaw(&self.times, &self.values, w)?;
        self.fit = Some(f);
        Ok(f)
    }

    pub fn fit_stretched_exp(&mut self, window: Option<(f64, f64)>) -> Result<LawFit, AnalysisError> {
        let w = window.or(self.default_window()).ok_or(AnalysisError::TooFewPoints {
            needed: 4,
            found: 0,
        })?;
        let f = fit_stretched_exp(&self.times, &self.values, w)?;
        self.fit = Some(f);
        Ok(f)
    }
}

fn window_points(
    t: &[f64],
    v: &[f64],
    window: (f64, f64),
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    let tol = 1e-12 * window.1.abs();
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(v)
        .filter(|(&t, _)| t >= window.0 - tol && t <= window.1 + tol)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 4 {
        return Err(AnalysisError::TooFewPoints {
            needed: 4,
            found: pts.len(),
        });
    }
    if let Some(&(time, value)) = pts.iter().find(|p| !(p.1 > 0.0)) {
        return Err(AnalysisError::NonPositive { time, value });
    }
    Ok(pts)
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - icpt).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, icpt, rms)
}

/// `v = A t^p` by least squares on `(ln t, ln v)`.
pub fn fit_powerlaw(t: &[f64], v: &[f64], window: (f64, f64)) -> Result<LawFit, AnalysisError> {
    let pts = window_points(t, v, window)?;
    if pts.iter().any(|p| !(p.0 > 0.0)) {
        return Err(AnalysisError::InvalidArgument(
            "power-law fit needs positive times".into(),
        ));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (p, c, rms) = least_squares(&x, &y);
    Ok(LawFit {
        rate: p,
        prefactor: c.exp(),
        residual: rms,
        window,
        points: pts.len(),
    })
}

/// `ln v = C t^(1/3) + offset` by least squares.
pub fn fit_stretched_exp(t: &[f64], v: &[f64], window: (f64, f64)) -> Result<LawFit, AnalysisError> {
    let pts = window_points(t, v, window)?;
    let x: Vec<f64> = pts.iter().map(|p| p.0.cbrt()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (c, off, rms) = least_squares(&x, &y);
    Ok(LawFit {
        rate: c,
        prefactor: off,
        residual: rms,
        window,
        points: pts.len(),
    })
}

/// Values of `W_g` with nodes at or below `support_fraction * max N`
/// zeroed, so the weight cannot amplify the vacuum floor.
fn supported_profile(s: &Spectrum, g: f64, support_fraction: f64) -> Vec<f64> {
    let level = support_fraction * s.max_value();
    weighted_profile(s, g)
        .into_iter()
        .zip(s.values())
        .map(|(w, &n)| if n > level { w } else { 0.0 })
        .collect()
}

/// Supremum of `W_g` with a parabolic refinement in `(ln omega, ln W)`.
fn refined_sup(w: &[f64], kappa: &[f64], h: f64) -> (f64, f64) {
    let i = argmax(w);
    if i == 0 || i + 1 == w.len() || w[i - 1] <= 0.0 || w[i + 1] <= 0.0 {
        return (w[i], kappa[i].exp());
    }
    let (dk, lv) = parabola_peak(w[i - 1].ln(), w[i].ln(), w[i + 1].ln(), h);
    (lv.exp(), (kappa[i] + dk).exp())
}

/// `|W_g|` over time and the frequency where it is attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WgSeries {
    pub g: f64,
    pub series: ScalingSeries,
    pub argmax: Vec<f64>,
}

/// `sup_omega omega^(g+1/2) N` per snapshot, over the support
/// `N > support_fraction * max N` (0 keeps every node).
pub fn wg_series(snapshots: &[Spectrum], g: f64, support_fraction: f64) -> Result<WgSeries, AnalysisError> {
    if snapshots.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            found: snapshots.len(),
        });
    }
    let mut times = Vec::with_capacity(snapshots.len());
    let mut sup = Vec::with_capacity(snapshots.len());
    let mut at = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let w = supported_profile(s, g, support_fraction);
        let (v, a) = refined_sup(&w, s.grid().log_nodes(), s.grid().log_step());
        times.push(s.time());
        sup.push(v);
        at.push(a);
    }
    Ok(WgSeries {
        g,
        series: ScalingSeries::new(format!("W_{g}"), times, sup)?,
        argmax: at,
    })
}

/// `Omega = W_g / |W_g|` on `kappa = ln omega`, tagged with `tau = ln |W_g|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledProfile {
    pub g: f64,
    pub time: f64,
    pub kappa: Vec<f64>,
    pub tau: f64,
    pub values: Vec<f64>,
}

pub fn rescale_profile(s: &Spectrum, g: f64, support_fraction: f64) -> Result<RescaledProfile, AnalysisError> {
    let w = supported_profile(s, g, support_fraction);
    let m = w[argmax(&w)];
    if !(m > 0.0 && m.is_finite()) {
        return Err(AnalysisError::InvalidArgument(format!(
            "|W_g| must be positive, got {m}"
        )));
    }
    Ok(RescaledProfile {
        g,
        time: s.time(),
        kappa: s.grid().log_nodes().to_vec(),
        tau: m.ln(),
        values: w.iter().map(|v| v / m).collect(),
    })
}

/// Normalisation of the traveling RJ profile:
/// `Z_g = (g + 1/2)^-(g + 1/2) (1/2 - g)^-(1/2 - g)` for `|g| < 1/2`.
pub fn rj_profile_norm(g: f64) -> f64 {
    let (p, q) = (g + 0.5, 0.5 - g);
    p.powf(-p) * q.powf(-q)
}

/// `Psi_RJ(s) = Z_g e^{s(g + 1/2)} / (e^s + 1)`, `s = ln(omega / mu)`; peak value 1.
pub fn rj_profile(g: f64, s: f64) -> f64 {
    let p = g + 0.5;
    // e^{s p} / (e^s + 1) written to stay finite for large |s|
    let v = if s > 0.0 {
        (s * (p - 1.0)).exp() / (1.0 + (-s).exp())
    } else {
        (s * p).exp() / (s.exp() + 1.0)
    };
    rj_profile_norm(g) * v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelingFit {
    /// `d kappa / d tau` from regression of the cumulative shifts on `tau`
    pub speed: f64,
    /// max L-infinity distance between successive shift-aligned profiles
    pub collapse_error: f64,
    /// cumulative shift of each profile relative to the first
    pub shifts: Vec<f64>,
    pub taus: Vec<f64>,
}

/// Linear interpolation of a profile sampled on a uniform `kappa` grid.
fn sample(p: &RescaledProfile, k: f64) -> f64 {
    let h = p.kappa[1] - p.kappa[0];
    let x = (k - p.kappa[0]) / h;
    if x < 0.0 || x > (p.kappa.len() - 1) as f64 {
        return 0.0;
    }
    let i = (x.floor() as usize).min(p.kappa.len() - 2);
    let f = x - i as f64;
    p.values[i] * (1.0 - f) + p.values[i + 1] * f
}

/// Shift `s` (in `kappa`) maximising `sum a(k) b(k + s)`, refined by a parabola.
fn correlation_shift(a: &RescaledProfile, b: &RescaledProfile, max_nodes: usize) -> Result<f64, AnalysisError> {
    let n = a.values.len();
    let h = a.kappa[1] - a.kappa[0];
    let corr = |m: isize| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            let j = i as isize + m;
            if j >= 0 && (j as usize) < n {
                acc += a.values[i] * b.values[j as usize];
            }
        }
        acc
    };
    let m = max_nodes as isize;
    let c: Vec<f64> = (-m..=m).map(corr).collect();
    let k = argmax(&c);
    if k == 0 || k + 1 == c.len() {
        return Err(AnalysisError::Unreliable);
    }
    let (d, _) = parabola_peak(c[k - 1], c[k], c[k + 1], 1.0);
    Ok((k as f64 - m as f64 + d) * h)
}

/// Estimates the traveling speed `c` of `Omega(kappa, tau) = Psi(kappa - c tau)`.
pub fn traveling_speed(profiles: &[RescaledProfile]) -> Result<TravelingFit, AnalysisError> {
    if profiles.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            found: profiles.len(),
        });
    }
    let first = &profiles[0];
    if first.kappa.len() < 3 {
        return Err(AnalysisError::InvalidArgument("profiles need at least 3 nodes".into()));
    }
    if profiles.iter().any(|p| p.kappa != first.kappa) {
        return Err(AnalysisError::InvalidArgument(
            "profiles must share one frequency grid".into(),
        ));
    }
    let taus: Vec<f64> = profiles.iter().map(|p| p.tau).collect();
    let span = taus.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - taus.iter().cloned().fold(f64::INFINITY, f64::min);
    if span < 1.0 {
        return Err(AnalysisError::InvalidArgument(format!(
            "profiles span d tau = {span:.3} < 1"
        )));
    }
    let max_nodes = first.kappa.len() / 2;
    let mut shifts = vec![0.0];
    let mut collapse: f64 = 0.0;
    for pair in profiles.windows(2) {
        let s = correlation_shift(&pair[0], &pair[1], max_nodes)?;
        shifts.push(shifts.last().unwrap() + s);
        for (i, &k) in pair[0].kappa.iter().enumerate() {
            let (va, vb) = (pair[0].values[i], sample(&pair[1], k + s));
            if va > 1e-3 || vb > 1e-3 {
                collapse = collapse.max((va - vb).abs());
            }
        }
    }
    let (speed, _, _) = least_squares(&taus, &shifts);
    Ok(TravelingFit {
        speed,
        collapse_error: collapse,
        shifts,
        taus,
    })
}

/// Predicted traveling speed: `1/(g - 3/2)` for UV norms, `1/g` for `g < 0`.
pub fn predicted_speed(g: f64) -> Option<f64> {
    if g > 1.5 {
        Some(1.0 / (g - 1.5))
    } else if g < 0.0 {
        Some(1.0 / g)
    } else {
        None
    }
}

/// Predicted algebraic growth exponent `g/3 - 1/2` of `|W_g|` for `g > 1/2`.
pub fn predicted_uv_exponent(g: f64) -> f64 {
    g / 3.0 - 0.5
}

/// Time series consumed by [`selfsimilar_exponents`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingSeries {
    pub times: Vec<f64>,
    pub omega_hat_plus: Vec<f64>,
    pub temperature: Vec<f64>,
    pub mu_hat: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub window: (f64, f64),
    /// front exponent `b`
    pub front: LawFit,
    /// temperature exponent `a + b`
    pub temperature: LawFit,
    pub a: f64,
    /// `b - (-2a - 1)`, zero for the self-similar prediction
    pub consistency: f64,
    /// slope of `ln mu^` against `t^(1/3)`
    pub cooling: Option<LawFit>,
}

/// Front and temperature exponents over `window`, which must span 1.5 decades.
pub fn selfsimilar_exponents(series: &CoolingSeries, window: (f64, f64)) -> Result<ExponentReport, AnalysisError> {
    let decades = (window.1 / window.0).log10();
    if !(decades >= 1.5) {
        return Err(AnalysisError::DynamicRange {
            decades,
            needed: 1.5,
        });
    }
    let front = fit_powerlaw(&series.times, &series.omega_hat_plus, window)?;
    let temperature = fit_powerlaw(&series.times, &series.temperature, window)?;
    let a = temperature.rate - front.rate;
    let cooling = fit_stretched_exp(&series.times, &series.mu_hat, window).ok();
    Ok(ExponentReport {
        window,
        front,
        temperature,
        a,
        consistency: front.rate + 2.0 * a + 1.0,
        cooling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LogFrequencyGrid;
    use crate::spectrum::RjParams;
    use std::sync::Arc;

    fn grid(lo: f64, hi: f64, n: usize) -> Arc<LogFrequencyGrid> {
        Arc::new(LogFrequencyGrid::new(lo, hi, n).unwrap())
    }

    #[test]
    fn peak_fit_recovers_rj() {
        let g = grid(1e-4, 1e4, 2000);
        let s = Spectrum::rayleigh_jeans(g.clone(), RjParams::new(3.0, 0.7).unwrap(), 0.0).unwrap();
        let f = fit_rj_peak(&s).unwrap();
        let cell = g.log_step();
        assert!((f.chemical_potential / 0.7).ln().abs() < cell);
        assert!((f.temperature / 3.0 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn peak_fit_on_boundary_max_fails() {
        let s = Spectrum::from_fn(grid(1.0, 10.0, 50), 0.0, |_| 1.0).unwrap();
        assert!(matches!(fit_rj_peak(&s), Err(AnalysisError::NoFit)));
    }

    #[test]
    fn conservation_estimator_examples() {
        let f = fit_rj_conservation(1.0, 1.0, 10.0).unwrap();
        assert!((f.temperature - 0.1).abs() < 1e-15);
        assert!((f.chemical_potential - 4.539_992_976_248_485e-4).abs() < 1e-16);
        let f = fit_rj_conservation(2.0, 1.0, 2.0).unwrap();
        assert!((f.temperature - 1.0).abs() < 1e-15);
        assert!((f.chemical_potential - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!(fit_rj_conservation(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn right_front_of_log_gaussian() {
        let s = Spectrum::from_fn(grid(1e-3, 1e3, 4001), 0.0, |w| (-(w.ln()).powi(2)).exp() / w).unwrap();
        let f = front_right(&s, (-1.0f64).exp()).unwrap();
        assert!((f - std::f64::consts::E).abs() < 1e-4, "{f}");
    }

    #[test]
    fn rj_energy_saturates_without_front() {
        let p = RjParams::new(1.0, 0.1).unwrap();
        let s = Spectrum::rayleigh_jeans(grid(1e-3, 1e3, 400), p, 0.0).unwrap();
        assert!(matches!(front_right(&s, 0.4), Err(AnalysisError::NoFront { side: "right" })));
        // truncating the tail puts the front at the truncation edge
        let t = Spectrum::from_fn(grid(1e-3, 1e3, 400), 0.0, |w| {
            if w < 10.0 { crate::rj_eval(p, w) } else { 1e-30 }
        })
        .unwrap();
        let f = front_right(&t, 0.4).unwrap();
        assert!(f > 9.0 && f < 10.5, "{f}");
    }

    #[test]
    fn left_front_of_symmetric_bump() {
        let s = Spectrum::from_fn(grid(1e-3, 1e3, 3001), 0.0, |w| (-(w.ln()).powi(2)).exp()).unwrap();
        let f = front_left(&s, 0.5).unwrap();
        let exact = (-(2.0f64.ln()).sqrt()).exp();
        assert!((f - exact).abs() < 1e-4);
        let dec = Spectrum::from_fn(grid(1e-3, 1e3, 100), 0.0, |w| 1.0 / (1.0 + w)).unwrap();
        assert!(matches!(front_left(&dec, 0.4), Err(AnalysisError::NoFront { side: "left" })));
    }

    #[test]
    fn threshold_monotonicity() {
        let s = Spectrum::from_fn(grid(1e-3, 1e3, 500), 0.0, |w| (-w).exp()).unwrap();
        let mut prev = f64::INFINITY;
        for sigma in [0.05, 0.1, 0.2, 0.4, 0.7, 0.9] {
            let f = front_right(&s, sigma).unwrap();
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn absolute_fronts_of_compact_bump() {
        let s = Spectrum::from_fn(grid(1e-2, 1e2, 800), 0.0, |w| {
            if (1.0..=2.0).contains(&w) { 1.0 } else { 1e-30 }
        })
        .unwrap();
        let a = absolute_fronts(&s, 1e-15).unwrap();
        assert!((a.omega_minus - 1.0).abs() < 0.02 && (a.omega_plus - 2.0).abs() < 0.03);
        assert!(!a.touches_boundary);
        let rj = Spectrum::rayleigh_jeans(grid(1e-2, 1e2, 100), RjParams::new(1.0, 1.0).unwrap(), 0.0).unwrap();
        assert!(absolute_fronts(&rj, 1e-15).unwrap().touches_boundary);
    }

    #[test]
    fn powerlaw_fits() {
        let t: Vec<f64> = (0..40).map(|i| 10f64.powf(i as f64 / 10.0)).collect();
        let v: Vec<f64> = t.iter().map(|t| 7.0 * t.cbrt()).collect();
        let f = fit_powerlaw(&t, &v, (1.0, 1e4)).unwrap();
        assert!((f.rate - 1.0 / 3.0).abs() < 1e-12 && (f.prefactor - 7.0).abs() < 1e-10);
        assert!(f.residual < 1e-12);
        let v: Vec<f64> = t.iter().map(|t| t.powf(-1.0 / 3.0) * (1.0 + 0.01 * t.ln().sin())).collect();
        let f = fit_powerlaw(&t, &v, (1.0, 1e4)).unwrap();
        assert!((f.rate + 1.0 / 3.0).abs() < 0.01);
        assert!(matches!(
            fit_powerlaw(&t, &v, (1.0, 1.5)),
            Err(AnalysisError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn stretched_exponential_fits() {
        let t: Vec<f64> = (0..60).map(|i| 10f64.powf(3.0 + i as f64 / 20.0)).collect();
        let v: Vec<f64> = t.iter().map(|t| (5.0 * t.cbrt()).exp()).collect();
        let f = fit_stretched_exp(&t, &v, (1e3, 1e6)).unwrap();
        assert!((f.rate - 5.0).abs() < 1e-10);
        // a polynomial prefactor is dominated on a large-t window
        let v: Vec<f64> = t.iter().map(|t| t * t * (5.0 * t.cbrt()).exp()).collect();
        let f = fit_stretched_exp(&t, &v, (1e3, 1e6)).unwrap();
        assert!((f.rate / 5.0 - 1.0).abs() < 0.05, "{}", f.rate);
    }

    #[test]
    fn rj_profile_peaks_at_one() {
        for k in 1..40 {
            let g = -0.5 + k as f64 / 40.0;
            // brute-force maximisation on a fine grid
            let best = (0..40001)
                .map(|i| -20.0 + i as f64 * 1e-3)
                .map(|s| rj_profile(g, s))
                .fold(0.0, f64::max);
            assert!((best - 1.0).abs() < 1e-6, "g={g}: {best}");
            let at = ((g + 0.5) / (0.5 - g)).ln();
            assert!((rj_profile(g, at) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rescaled_profile_normalisation() {
        let g = grid(1e-3, 1e3, 600);
        let s = Spectrum::rayleigh_jeans(g.clone(), RjParams::new(2.0, 0.5).unwrap(), 0.0).unwrap();
        let p = rescale_profile(&s, -0.125, 0.0).unwrap();
        let max = p.values.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        let scaled = Spectrum::new(g.clone(), s.values().iter().map(|v| 3.0 * v).collect(), 0.0).unwrap();
        let q = rescale_profile(&scaled, -0.125, 0.0).unwrap();
        assert!((q.tau - p.tau - 3f64.ln()).abs() < 1e-12);
        for (a, b) in p.values.iter().zip(&q.values) {
            assert!((a - b).abs() < 1e-15);
        }
        // the RJ profile itself, with sigma = ln(omega / mu)
        for (k, v) in p.kappa.iter().zip(&p.values) {
            assert!((v - rj_profile(-0.125, k - 0.5f64.ln())).abs() < 1e-4);
        }
    }

    #[test]
    fn rescaled_power_law() {
        let s = Spectrum::from_fn(grid(1.0, 100.0, 200), 0.0, |w| 1.0 / w.sqrt()).unwrap();
        let p = rescale_profile(&s, 2.0, 0.0).unwrap();
        let km = *p.kappa.last().unwrap();
        for (k, v) in p.kappa.iter().zip(&p.values) {
            assert!((v - (2.0 * (k - km)).exp()).abs() < 1e-12);
        }
    }

    fn synthetic_profiles(c: f64) -> Vec<RescaledProfile> {
        let g = grid(1e-6, 1e6, 1201);
        [0.0, 1.0, 2.0, 3.0]
            .iter()
            .map(|&tau| {
                let kappa = g.log_nodes().to_vec();
                let values = kappa.iter().map(|k| (-(k - c * tau).powi(2) / 2.0).exp()).collect();
                RescaledProfile { g: 0.0, time: tau, kappa, tau, values }
            })
            .collect()
    }

    #[test]
    fn traveling_speed_of_rigid_translation() {
        for c in [0.5, -0.5, 2.0] {
            let f = traveling_speed(&synthetic_profiles(c)).unwrap();
            assert!((f.speed - c).abs() < 1e-3, "{c}: {}", f.speed);
            assert!(f.collapse_error < 1e-3, "{}", f.collapse_error);
        }
    }

    #[test]
    fn traveling_speed_needs_range() {
        let mut p = synthetic_profiles(0.5);
        for (i, q) in p.iter_mut().enumerate() {
            q.tau = 0.1 * i as f64;
        }
        assert!(traveling_speed(&p).is_err());
        assert!(traveling_speed(&p[..2]).is_err());
    }

    #[test]
    fn exponent_report_on_synthetic_laws() {
        let t: Vec<f64> = (0..41).map(|i| 10f64.powf(1.0 + i as f64 / 10.0)).collect();
        let cp = 5.0;
        let series = CoolingSeries {
            omega_hat_plus: t.iter().map(|t| cp * t.cbrt()).collect(),
            temperature: t.iter().map(|t| 0.3 * t.powf(-1.0 / 3.0)).collect(),
            mu_hat: t.iter().map(|t| (-cp * t.cbrt()).exp()).collect(),
            times: t,
        };
        let r = selfsimilar_exponents(&series, (10.0, 1e5)).unwrap();
        assert!((r.front.rate - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.a + 2.0 / 3.0).abs() < 1e-12);
        assert!(r.consistency.abs() < 1e-12);
        assert!((r.cooling.unwrap().rate + cp).abs() < 1e-10);
        assert!(matches!(
            selfsimilar_exponents(&series, (10.0, 200.0)),
            Err(AnalysisError::DynamicRange { .. })
        ));
    }

    #[test]
    fn wg_series_of_rj_is_peak_norm() {
        let g = grid(1e-4, 1e4, 1500);
        let snaps: Vec<Spectrum> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&t| Spectrum::rayleigh_jeans(g.clone(), RjParams::new(t, 0.3).unwrap(), t).unwrap())
            .collect();
        let w = wg_series(&snaps, 0.0, 0.0).unwrap();
        for (s, v) in snaps.iter().zip(&w.series.values) {
            let f = fit_rj_peak(s).unwrap();
            let expect = f.temperature / (2.0 * f.chemical_potential.sqrt());
            assert!((v / expect - 1.0).abs() < 1e-6);
        }
        assert!(wg_series(&snaps[..2], 0.0, 0.0).is_err());
    }
}
