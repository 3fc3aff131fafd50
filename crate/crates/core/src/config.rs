//! Flat `key = value` run configuration with `#` comments.
//!
//! The mandatory `model` key selects `dam` or `nls`; every other key is
//! optional and falls back to the desk preset of that model. Unknown and
//! duplicate keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::dam::{DamConfig, InitialCondition, Integrator};
use crate::error::{ConfigError, DamError, NlsError};
use crate::nls::NlsConfig;
use crate::spectrum::RjParams;

#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Dam(DamConfig),
    Nls(NlsConfig),
}

/// Built-in presets, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("dam-desk", include_str!("../presets/dam-desk.cfg")),
    ("dam-deep", include_str!("../presets/dam-deep.cfg")),
    ("nls-desk", include_str!("../presets/nls-desk.cfg")),
    ("nls-paper", include_str!("../presets/nls-paper.cfg")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

const DAM_KEYS: &[&str] = &[
    "model",
    "omega_min",
    "omega_max",
    "n_points",
    "initial",
    "omega0",
    "sigma0",
    "amplitude",
    "temperature",
    "chemical_potential",
    "integrator",
    "max_stages",
    "tolerance",
    "dt_initial",
    "safety",
    "stability",
    "dt_growth",
    "dt_min",
    "floor_fraction",
    "front_threshold",
    "accuracy_cutoff",
    "boundary_margin_decades",
    "t_final",
    "output_start",
    "outputs_per_decade",
];

const NLS_KEYS: &[&str] = &[
    "model",
    "resolution",
    "box_size",
    "dt",
    "t_final",
    "nu",
    "hyper_order",
    "amplitude",
    "k0",
    "sigma0",
    "seed",
    "members",
    "output_start",
    "outputs_per_decade",
    "invariants_every",
    "bins_per_decade",
];

struct Entry {
    line: usize,
    value: String,
}

fn tokenize(text: &str) -> Result<BTreeMap<String, Entry>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: format!("empty key or value in `{body}`"),
            });
        }
        if out.contains_key(key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        out.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(out)
}

/// Typed access to the tokenized entries.
struct Table(BTreeMap<String, Entry>);

impl Table {
    fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.0.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            Some((k, e)) => Err(ConfigError::UnknownKey {
                line: e.line,
                key: k.clone(),
            }),
            None => Ok(()),
        }
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|e| e.value.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| ConfigError::Parse {
                line: e.line,
                message: format!("`{key}`: expected {what}, got `{}`", e.value),
            }),
        }
    }

    fn f64(&self, key: &str, slot: &mut f64) -> Result<(), ConfigError> {
        if let Some(v) = self.parse(key, "a number")? {
            *slot = v;
        }
        Ok(())
    }

    fn usize(&self, key: &str, slot: &mut usize) -> Result<(), ConfigError> {
        if let Some(v) = self.parse(key, "a non-negative integer")? {
            *slot = v;
        }
        Ok(())
    }

    fn u64(&self, key: &str, slot: &mut u64) -> Result<(), ConfigError> {
        if let Some(v) = self.parse(key, "a non-negative integer")? {
            *slot = v;
        }
        Ok(())
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |e| e.line)
    }
}

fn dam_validation(e: DamError) -> ConfigError {
    match e {
        DamError::Config { field, message } => ConfigError::Validation { field, message },
        other => ConfigError::Validation {
            field: "grid",
            message: other.to_string(),
        },
    }
}

fn nls_validation(e: NlsError) -> ConfigError {
    match e {
        NlsError::Config { field, message } => ConfigError::Validation { field, message },
        other => ConfigError::Validation {
            field: "resolution",
            message: other.to_string(),
        },
    }
}

fn parse_dam(t: &Table) -> Result<DamConfig, ConfigError> {
    t.check_keys(DAM_KEYS)?;
    let mut c = DamConfig::desk();
    t.f64("omega_min", &mut c.grid.omega_min)?;
    t.f64("omega_max", &mut c.grid.omega_max)?;
    t.usize("n_points", &mut c.grid.n_points)?;
    let (mut omega0, mut sigma0, mut amplitude) = match c.initial {
        InitialCondition::Gaussian {
            omega0,
            sigma0,
            amplitude,
        } => (omega0, sigma0, amplitude),
        InitialCondition::RayleighJeans(_) => (1.0, 0.1, 1.0),
    };
    t.f64("omega0", &mut omega0)?;
    t.f64("sigma0", &mut sigma0)?;
    t.f64("amplitude", &mut amplitude)?;
    let (mut temperature, mut mu) = (1.0, 1.0);
    t.f64("temperature", &mut temperature)?;
    t.f64("chemical_potential", &mut mu)?;
    c.initial = match t.str("initial").unwrap_or("gaussian") {
        "gaussian" => InitialCondition::Gaussian {
            omega0,
            sigma0,
            amplitude,
        },
        "rayleigh_jeans" => InitialCondition::RayleighJeans(RjParams::new(temperature, mu).map_err(
            |e| ConfigError::Validation {
                field: "temperature",
                message: e.to_string(),
            },
        )?),
        other => {
            return Err(ConfigError::Parse {
                line: t.line("initial"),
                message: format!("`initial`: expected gaussian or rayleigh_jeans, got `{other}`"),
            })
        }
    };
    let mut max_stages = match c.integrator {
        Integrator::Rkc { max_stages } => max_stages,
        _ => 4000,
    };
    let mut tolerance = match c.integrator {
        Integrator::Rosenbrock { tolerance } => tolerance,
        _ => 1e-3,
    };
    t.usize("max_stages", &mut max_stages)?;
    t.f64("tolerance", &mut tolerance)?;
    if let Some(name) = t.str("integrator") {
        c.integrator = match name {
            "ab2" => Integrator::Ab2,
            "rkc" => Integrator::Rkc { max_stages },
            "rosenbrock" => Integrator::Rosenbrock { tolerance },
            other => {
                return Err(ConfigError::Parse {
                    line: t.line("integrator"),
                    message: format!("`integrator`: expected ab2, rkc or rosenbrock, got `{other}`"),
                })
            }
        };
    } else {
        c.integrator = match c.integrator {
            Integrator::Rkc { .. } => Integrator::Rkc { max_stages },
            Integrator::Rosenbrock { .. } => Integrator::Rosenbrock { tolerance },
            Integrator::Ab2 => Integrator::Ab2,
        };
    }
    t.f64("dt_initial", &mut c.dt_initial)?;
    t.f64("safety", &mut c.safety)?;
    t.f64("stability", &mut c.stability)?;
    t.f64("dt_growth", &mut c.dt_growth)?;
    t.f64("dt_min", &mut c.dt_min)?;
    t.f64("floor_fraction", &mut c.floor_fraction)?;
    t.f64("front_threshold", &mut c.front_threshold)?;
    t.f64("accuracy_cutoff", &mut c.accuracy_cutoff)?;
    t.f64("boundary_margin_decades", &mut c.boundary_margin_decades)?;
    t.f64("t_final", &mut c.t_final)?;
    t.f64("output_start", &mut c.output_start)?;
    t.usize("outputs_per_decade", &mut c.outputs_per_decade)?;
    c.validate().map_err(dam_validation)?;
    Ok(c)
}

fn parse_nls(t: &Table) -> Result<NlsConfig, ConfigError> {
    t.check_keys(NLS_KEYS)?;
    let mut c = NlsConfig::desk();
    t.usize("resolution", &mut c.resolution)?;
    t.f64("box_size", &mut c.box_size)?;
    t.f64("dt", &mut c.dt)?;
    t.f64("t_final", &mut c.t_final)?;
    if let Some(order) = t.parse::<u32>("hyper_order", "a positive integer")? {
        c.hyper_order = order;
    }
    t.f64("amplitude", &mut c.amplitude)?;
    t.f64("k0", &mut c.k0)?;
    t.f64("sigma0", &mut c.sigma0)?;
    t.u64("seed", &mut c.seed)?;
    t.usize("members", &mut c.members)?;
    t.f64("output_start", &mut c.output_start)?;
    t.usize("outputs_per_decade", &mut c.outputs_per_decade)?;
    t.u64("invariants_every", &mut c.invariants_every)?;
    t.usize("bins_per_decade", &mut c.bins_per_decade)?;
    // resolution first, so a bad n is reported as such and not as a bad nu
    c.validate().map_err(nls_validation)?;
    match t.str("nu") {
        None | Some("auto") => c.nu = c.desk_viscosity(),
        Some(_) => t.f64("nu", &mut c.nu)?,
    }
    c.validate().map_err(nls_validation)?;
    Ok(c)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let t = Table(tokenize(text)?);
    match t.str("model") {
        None => Err(ConfigError::MissingKey("model")),
        Some("dam") => parse_dam(&t).map(RunConfig::Dam),
        Some("nls") => parse_nls(&t).map(RunConfig::Nls),
        Some(other) => Err(ConfigError::Parse {
            line: t.line("model"),
            message: format!("`model`: expected dam or nls, got `{other}`"),
        }),
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

/// Canonical text form; parses back to the same configuration.
pub fn to_config_text(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    let num = |v: f64| format!("{v:e}");
    match cfg {
        RunConfig::Dam(c) => {
            kv("model", "dam".into());
            kv("omega_min", num(c.grid.omega_min));
            kv("omega_max", num(c.grid.omega_max));
            kv("n_points", c.grid.n_points.to_string());
            match c.initial {
                InitialCondition::Gaussian {
                    omega0,
                    sigma0,
                    amplitude,
                } => {
                    kv("initial", "gaussian".into());
                    kv("omega0", num(omega0));
                    kv("sigma0", num(sigma0));
                    kv("amplitude", num(amplitude));
                }
                InitialCondition::RayleighJeans(p) => {
                    kv("initial", "rayleigh_jeans".into());
                    kv("temperature", num(p.temperature));
                    kv("chemical_potential", num(p.chemical_potential));
                }
            }
            match c.integrator {
                Integrator::Ab2 => kv("integrator", "ab2".into()),
                Integrator::Rkc { max_stages } => {
                    kv("integrator", "rkc".into());
                    kv("max_stages", max_stages.to_string());
                }
                Integrator::Rosenbrock { tolerance } => {
                    kv("integrator", "rosenbrock".into());
                    kv("tolerance", num(tolerance));
                }
            }
            kv("dt_initial", num(c.dt_initial));
            kv("safety", num(c.safety));
            kv("stability", num(c.stability));
            kv("dt_growth", num(c.dt_growth));
            kv("dt_min", num(c.dt_min));
            kv("floor_fraction", num(c.floor_fraction));
            kv("front_threshold", num(c.front_threshold));
            kv("accuracy_cutoff", num(c.accuracy_cutoff));
            kv("boundary_margin_decades", num(c.boundary_margin_decades));
            kv("t_final", num(c.t_final));
            kv("output_start", num(c.output_start));
            kv("outputs_per_decade", c.outputs_per_decade.to_string());
        }
        RunConfig::Nls(c) => {
            kv("model", "nls".into());
            kv("resolution", c.resolution.to_string());
            kv("box_size", num(c.box_size));
            kv("dt", num(c.dt));
            kv("t_final", num(c.t_final));
            kv("nu", num(c.nu));
            kv("hyper_order", c.hyper_order.to_string());
            kv("amplitude", num(c.amplitude));
            kv("k0", num(c.k0));
            kv("sigma0", num(c.sigma0));
            kv("seed", c.seed.to_string());
            kv("members", c.members.to_string());
            kv("output_start", num(c.output_start));
            kv("outputs_per_decade", c.outputs_per_decade.to_string());
            kv("invariants_every", c.invariants_every.to_string());
            kv("bins_per_decade", c.bins_per_decade.to_string());
        }
    }
    s
}
