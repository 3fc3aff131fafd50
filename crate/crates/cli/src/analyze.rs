//! `analyze` reports over a run directory's snapshots.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use wavecool_core::analysis::{
    estimate_fronts, kinematics, predicted_speed, predicted_uv_exponent, rescale_profile,
    selfsimilar_exponents, traveling_speed, wg_series, CoolingSeries, LawFit,
};
use wavecool_core::snapshot::read_snapshot;
use wavecool_core::{LogFrequencyGrid, Spectrum};

use crate::{AnalyzeCommand, AnalyzeInput, Outcome, UsageError};

/// Snapshots of a run directory sorted by time (duplicate times dropped).
pub fn load_run(dir: &Path) -> anyhow::Result<Vec<Spectrum>> {
    let snap_dir = dir.join("snapshots");
    let mut files: Vec<PathBuf> = fs::read_dir(&snap_dir)
        .with_context(|| format!("listing {}", snap_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    let mut grid: Option<Arc<LogFrequencyGrid>> = None;
    let mut out: Vec<Spectrum> = Vec::with_capacity(files.len());
    for f in &files {
        let s = read_snapshot(f, grid.as_ref())?;
        grid = Some(s.grid().clone());
        out.push(s);
    }
    out.sort_by(|a, b| a.time().total_cmp(&b.time()));
    out.dedup_by(|a, b| a.time() == b.time());
    if out.len() < 2 {
        return Err(UsageError(format!("fewer than two snapshots under {}", snap_dir.display())).into());
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.10e}"))
}

fn window_of(io: &AnalyzeInput, default: (f64, f64)) -> anyhow::Result<(f64, f64)> {
    match io.window.as_deref() {
        None => Ok(default),
        Some(&[lo, hi]) if lo > 0.0 && hi > lo => Ok((lo, hi)),
        Some(w) => Err(UsageError(format!("--window needs 0 < lo < hi, got {w:?}")).into()),
    }
}

/// `<dir>/<stem>_series.csv` next to `out`.
fn series_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}_series.csv"))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cmd: &AnalyzeCommand) -> anyhow::Result<Outcome> {
    match cmd {
        AnalyzeCommand::Fronts {
            io,
            sigma,
            sigma_tilde,
            floor,
        } => {
            let snaps = load_run(&io.input)?;
            write(&io.out, &fronts_report(&snaps, *sigma, *sigma_tilde, *floor)?)?;
        }
        AnalyzeCommand::Rj { io, sigma } => {
            let snaps = load_run(&io.input)?;
            write(&io.out, &rj_report(&snaps, *sigma)?)?;
        }
        AnalyzeCommand::Wg { io, g, support } => {
            let snaps = load_run(&io.input)?;
            let last = snaps.last().unwrap().time();
            let window = window_of(io, (last / 10.0, last))?;
            let (report, series) = wg_report(&snaps, g, *support, window)?;
            write(&io.out, &report)?;
            write(&series_path(&io.out), &series)?;
            print!("{report}");
        }
        AnalyzeCommand::Collapse { io, g, support } => {
            let snaps = load_run(&io.input)?;
            let last = snaps.last().unwrap().time();
            let window = window_of(io, (last / 10.0, last))?;
            let support = support.unwrap_or(default_support(*g));
            let (report, series) = collapse_report(&snaps, *g, support, window)?;
            write(&io.out, &report)?;
            write(&series_path(&io.out), &series)?;
            print!("{report}");
        }
        AnalyzeCommand::Exponents { io, sigma } => {
            let snaps = load_run(&io.input)?;
            let last = snaps.last().unwrap().time();
            let window = window_of(io, (last / 100.0, last))?;
            let report = exponents_report(&snaps, *sigma, window)?;
            write(&io.out, &report)?;
            print!("{report}");
        }
    }
    Ok(Outcome::Success)
}

pub fn fronts_report(snaps: &[Spectrum], sigma: f64, sigma_tilde: f64, floor: f64) -> anyhow::Result<String> {
    let mut s = String::from("t,omega_hat_minus,omega_hat_plus,omega_minus,omega_plus\n");
    for snap in snaps {
        let f = estimate_fronts(snap, sigma, sigma_tilde, Some(floor))?;
        s.push_str(&format!(
            "{:.10e},{},{},{},{}\n",
            f.time,
            opt(f.omega_hat_minus),
            opt(f.omega_hat_plus),
            opt(f.omega_minus),
            opt(f.omega_plus)
        ));
    }
    Ok(s)
}

pub fn rj_report(snaps: &[Spectrum], sigma: f64) -> anyhow::Result<String> {
    let c0 = snaps[0].conserved();
    let mut s = String::from("t,T,mu,T_hat,mu_hat,omega_hat_plus\n");
    for snap in snaps {
        let k = kinematics(snap, c0.energy, c0.waveaction, sigma, 0.4, None)?;
        s.push_str(&format!(
            "{:.10e},{},{},{},{},{}\n",
            k.time,
            opt(k.peak.map(|f| f.temperature)),
            opt(k.peak.map(|f| f.chemical_potential)),
            opt(k.conservation.map(|f| f.temperature)),
            opt(k.conservation.map(|f| f.chemical_potential)),
            opt(k.fronts.omega_hat_plus)
        ));
    }
    Ok(s)
}

/// Support fraction used when none is given: the UV norms (`g > 1/2`) peak
/// on the far tail, so every node is kept; the IR norms use `1e-8`.
pub fn default_support(g: f64) -> f64 {
    if g > 0.5 {
        0.0
    } else {
        1e-8
    }
}

/// Power law for `g > 1/2`, stretched exponential `exp(C t^(1/3))` otherwise.
pub fn wg_law(g: f64) -> &'static str {
    if g > 0.5 {
        "power"
    } else {
        "stretched_exp"
    }
}

fn fit_row(g: f64, law: &str, f: &LawFit, predicted: Option<f64>) -> String {
    format!(
        "{g},{law},{:.6e},{:.6e},{:.3e},{:.6e},{:.6e},{},{}\n",
        f.rate,
        f.prefactor,
        f.residual,
        f.window.0,
        f.window.1,
        f.points,
        opt(predicted)
    )
}

pub fn wg_report(
    snaps: &[Spectrum],
    gs: &[f64],
    support: Option<f64>,
    window: (f64, f64),
) -> anyhow::Result<(String, String)> {
    let mut report = String::from("g,law,rate,prefactor,residual,window_lo,window_hi,points,predicted\n");
    let mut series = String::from("g,t,W,argmax\n");
    for &g in gs {
        let mut w = wg_series(snaps, g, support.unwrap_or(default_support(g)))?;
        for ((t, v), a) in w.series.times.iter().zip(&w.series.values).zip(&w.argmax) {
            series.push_str(&format!("{g},{t:.10e},{v:.10e},{a:.10e}\n"));
        }
        let law = wg_law(g);
        let (fit, predicted) = if law == "power" {
            (w.series.fit_powerlaw(Some(window))?, Some(predicted_uv_exponent(g)))
        } else {
            (w.series.fit_stretched_exp(Some(window))?, None)
        };
        report.push_str(&fit_row(g, law, &fit, predicted));
    }
    Ok((report, series))
}

pub fn collapse_report(
    snaps: &[Spectrum],
    g: f64,
    support: f64,
    window: (f64, f64),
) -> anyhow::Result<(String, String)> {
    let profiles = snaps
        .iter()
        .filter(|s| s.time() > 0.0 && s.time() >= window.0 && s.time() <= window.1)
        .map(|s| rescale_profile(s, g, support))
        .collect::<Result<Vec<_>, _>>()?;
    let fit = traveling_speed(&profiles)?;
    let span = fit.taus.last().unwrap() - fit.taus[0];
    let report = format!(
        "g,speed,predicted,collapse_error,profiles,tau_span\n{g},{:.6e},{},{:.6e},{},{:.6e}\n",
        fit.speed,
        opt(predicted_speed(g)),
        fit.collapse_error,
        profiles.len(),
        span
    );
    let mut series = String::from("t,tau,shift\n");
    for (p, s) in profiles.iter().zip(&fit.shifts) {
        series.push_str(&format!("{:.10e},{:.10e},{s:.10e}\n", p.time, p.tau));
    }
    Ok((report, series))
}

/// Series of `omega_hat_plus`, peak `T` and conservation `mu_hat` over the
/// snapshots where all three exist.
pub fn cooling_series(snaps: &[Spectrum], sigma: f64) -> anyhow::Result<CoolingSeries> {
    let c0 = snaps[0].conserved();
    let mut cs = CoolingSeries {
        times: Vec::new(),
        omega_hat_plus: Vec::new(),
        temperature: Vec::new(),
        mu_hat: Vec::new(),
    };
    for snap in snaps.iter().filter(|s| s.time() > 0.0) {
        let k = kinematics(snap, c0.energy, c0.waveaction, sigma, 0.4, None)?;
        if let (Some(w), Some(p), Some(c)) = (k.fronts.omega_hat_plus, k.peak, k.conservation) {
            cs.times.push(k.time);
            cs.omega_hat_plus.push(w);
            cs.temperature.push(p.temperature);
            cs.mu_hat.push(c.chemical_potential);
        }
    }
    Ok(cs)
}

pub fn exponents_report(snaps: &[Spectrum], sigma: f64, window: (f64, f64)) -> anyhow::Result<String> {
    let cs = cooling_series(snaps, sigma)?;
    let r = selfsimilar_exponents(&cs, window)?;
    Ok(format!(
        "window_lo,window_hi,b,temperature_exponent,a,consistency,cooling_rate\n{:.6e},{:.6e},{:.6},{:.6},{:.6},{:.6},{}\n",
        r.window.0,
        r.window.1,
        r.front.rate,
        r.temperature.rate,
        r.a,
        r.consistency,
        opt(r.cooling.map(|c| c.rate))
    ))
}
