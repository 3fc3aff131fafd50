use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("omega_min must be positive and finite, got {0}")]
    NonPositiveMin(f64),
    #[error("empty frequency range [{omega_min}, {omega_max}]")]
    EmptyRange { omega_min: f64, omega_max: f64 },
    #[error("a grid needs at least 8 points, got {0}")]
    TooFewPoints(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("spectrum has {values} values but the grid has {nodes} nodes")]
    LengthMismatch { values: usize, nodes: usize },
    #[error("wave action density at node {index} is {value}; it must be finite and non-negative")]
    InvalidValue { index: usize, value: f64 },
    #[error("RJ parameters must be strictly positive (T = {temperature}, mu = {chemical_potential})")]
    InvalidRj {
        temperature: f64,
        chemical_potential: f64,
    },
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed snapshot {path}, line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("malformed sidecar {path}: {message}")]
    Sidecar { path: String, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DamError {
    #[error("positivity violated at node {index} (omega = {omega}): N = {value}")]
    Positivity { index: usize, omega: f64, value: f64 },
    #[error("time step underflow: dt = {dt} < dt_min = {dt_min} at t = {time}")]
    DtUnderflow { dt: f64, dt_min: f64, time: f64 },
    #[error("positivity could not be restored after {attempts} step rejections at t = {time}")]
    PositivityUnrecoverable { attempts: usize, time: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error("invalid DAM configuration: {field}: {message}")]
    Config { field: &'static str, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlsError {
    #[error("non-finite value in the field at t = {time} (member {member}, step {step})")]
    BlowUp { time: f64, member: usize, step: u64 },
    #[error("resolution mismatch: expected {expected}, got {found}")]
    ResolutionMismatch { expected: usize, found: usize },
    #[error("field is in the {found} representation; {expected} required")]
    Representation {
        expected: &'static str,
        found: &'static str,
    },
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("invalid NLS configuration: {field}: {message}")]
    Config { field: &'static str, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("elliptic modulus q = {0} is outside [0, 1)")]
    ModulusOutOfRange(f64),
    #[error("all quartet frequencies must be positive: {0:?}")]
    NonPositiveFrequency([f64; 4]),
    #[error("resonance gives omega3 = {0} < 0")]
    NegativeOmega3(f64),
    #[error("scale range [{lo}, {hi}] spans less than three decades")]
    ScaleRange { lo: f64, hi: f64 },
    #[error("power-law fit of region {region} at x = {x} failed: R^2 = {r_squared}")]
    FitFailure { region: char, x: f64, r_squared: f64 },
    #[error("non-integrable input: {0}")]
    NonIntegrable(String),
    #[error("plateau undefined: a = {a} must exceed B = {b}")]
    NoPlateau { a: f64, b: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("maximum of the weighted profile lies on the grid boundary; no RJ fit")]
    NoFit,
    #[error("no threshold crossing found on the {side} side of the maximum")]
    NoFront { side: &'static str },
    #[error("need at least {needed} points in the fit window, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("non-positive value {value} at t = {time} in a logarithmic fit")]
    NonPositive { time: f64, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient dynamic range: {decades:.2} decades in t (need {needed})")]
    DynamicRange { decades: f64, needed: f64 },
    #[error("cross-correlation peak on the edge of the search window")]
    Unreliable,
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing mandatory key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: &'static str, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}
