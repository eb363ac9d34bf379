//! Experiment configuration: a versioned TOML schema with per-scenario
//! defaults. Validation reports every violation, not just the first.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nlsdecay_core::{EquationSpec, GridSpec, LemmaKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "decay-3d-quintic")]
    Decay3dQuintic,
    #[serde(rename = "decay-3d-cubic")]
    Decay3dCubic,
    #[serde(rename = "decay-2d-quintic")]
    Decay2dQuintic,
    #[serde(rename = "linear-dispersive")]
    LinearDispersive,
    #[serde(rename = "duhamel-split")]
    DuhamelSplit,
    #[serde(rename = "lemma-suite")]
    LemmaSuite,
    #[serde(rename = "pseudo-conformal")]
    PseudoConformal,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Decay3dQuintic,
        Scenario::Decay3dCubic,
        Scenario::Decay2dQuintic,
        Scenario::LinearDispersive,
        Scenario::DuhamelSplit,
        Scenario::LemmaSuite,
        Scenario::PseudoConformal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Decay3dQuintic => "decay-3d-quintic",
            Scenario::Decay3dCubic => "decay-3d-cubic",
            Scenario::Decay2dQuintic => "decay-2d-quintic",
            Scenario::LinearDispersive => "linear-dispersive",
            Scenario::DuhamelSplit => "duhamel-split",
            Scenario::LemmaSuite => "lemma-suite",
            Scenario::PseudoConformal => "pseudo-conformal",
        }
    }

    /// `(d, q)` of the headline model a decay scenario integrates.
    pub fn model(self) -> Option<(usize, u32)> {
        match self {
            Scenario::Decay3dQuintic => Some((3, 5)),
            Scenario::Decay3dCubic => Some((3, 3)),
            Scenario::Decay2dQuintic => Some((2, 5)),
            _ => None,
        }
    }

    pub fn is_decay(self) -> bool {
        self.model().is_some()
    }

    /// Scenarios that time-step the nonlinear equation.
    pub fn evolves(self) -> bool {
        self.is_decay() || self == Scenario::DuhamelSplit
    }

    /// Dotted names of the fields that have no default for this scenario.
    pub fn required_fields(self) -> &'static [&'static str] {
        match self {
            Scenario::Decay3dQuintic | Scenario::Decay3dCubic | Scenario::Decay2dQuintic => {
                &["schema_version", "scenario"]
            }
            Scenario::LinearDispersive => &["schema_version", "scenario", "grid.dimension"],
            Scenario::DuhamelSplit => &[
                "schema_version",
                "scenario",
                "grid.dimension",
                "equation.exponent",
                "duhamel.m",
                "duhamel.times",
            ],
            Scenario::LemmaSuite => &["schema_version", "scenario", "lemma.kinds"],
            Scenario::PseudoConformal => &["schema_version", "scenario", "pseudo_conformal.times"],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<_> = Scenario::ALL.iter().map(|x| x.name()).collect();
            format!("unknown scenario {s:?} (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn violations(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dimension: usize,
    pub points: usize,
    pub half_width: f64,
}

impl GridConfig {
    pub fn spec(&self) -> nlsdecay_core::Result<GridSpec> {
        GridSpec::new(self.dimension, self.half_width, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationConfig {
    pub exponent: u32,
    pub linear: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumConfig {
    pub sigma: f64,
    pub amplitude: f64,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfigSection {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between stored snapshots (Duhamel analysis).
    pub snapshot_every: u64,
    pub dealiasing: bool,
    /// Relative energy drift that triggers a rerun at half the step.
    pub energy_tolerance: f64,
    pub max_dt_halvings: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Steps between trace rows.
    pub every: u64,
    pub sobolev_order: f64,
    pub strichartz_q: f64,
    pub strichartz_r: f64,
    pub sup_upsample: usize,
    pub validity_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_tolerance: Option<f64>,
    /// Largest relative change of `A` across the last 20% of the window.
    pub plateau_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuhamelConfig {
    pub m: f64,
    pub l: f64,
    pub allow_short_l: bool,
    pub times: Vec<f64>,
    pub residual_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaConfig {
    pub kinds: Vec<LemmaKind>,
    pub samples: u64,
    pub cutoff: f64,
    pub decay: f64,
    /// Also run every suite on a grid with twice the points.
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConfig {
    pub samples: usize,
    pub plateau_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoConformalConfig {
    pub times: Vec<f64>,
    pub target_points: usize,
    pub target_half_width: f64,
    pub mass_tolerance: f64,
    pub residual_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    pub every_steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every_seconds: Option<f64>,
}

/// A validated configuration with every default filled in. Sections that a
/// scenario does not use are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equation: Option<EquationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datum: Option<DatumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfigSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duhamel: Option<DuhamelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<LemmaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_conformal: Option<PseudoConformalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<CheckpointConfig>,
}

impl ExperimentConfig {
    pub fn grid_spec(&self) -> GridSpec {
        self.grid.spec().expect("validated grid")
    }

    pub fn equation_spec(&self) -> Option<EquationSpec> {
        let e = self.equation.as_ref()?;
        let eq = EquationSpec::new(self.grid.dimension, e.exponent).expect("validated equation");
        Some(if e.linear { eq.without_nonlinearity() } else { eq })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML form, excluding the output directory so
    /// that a run keeps its identity when moved.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }
}

// ---- raw layer: what a file may contain -------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    scenario: Option<String>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    grid: Option<RawGrid>,
    equation: Option<RawEquation>,
    datum: Option<RawDatum>,
    solver: Option<RawSolver>,
    diagnostics: Option<RawDiagnostics>,
    duhamel: Option<RawDuhamel>,
    lemma: Option<RawLemma>,
    linear: Option<RawLinear>,
    pseudo_conformal: Option<RawPseudoConformal>,
    checkpoint: Option<RawCheckpoint>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dimension: Option<usize>,
    points: Option<usize>,
    half_width: Option<f64>,
    /// Half width in units of π.
    half_width_pi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEquation {
    exponent: Option<u32>,
    linear: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDatum {
    sigma: Option<f64>,
    amplitude: Option<f64>,
    center: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    dt: Option<f64>,
    t_end: Option<f64>,
    snapshot_every: Option<u64>,
    dealiasing: Option<bool>,
    energy_tolerance: Option<f64>,
    max_dt_halvings: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    every: Option<u64>,
    sobolev_order: Option<f64>,
    strichartz_q: Option<f64>,
    strichartz_r: Option<f64>,
    sup_upsample: Option<usize>,
    validity_tol: Option<f64>,
    fit_window: Option<[f64; 2]>,
    expected_slope: Option<f64>,
    slope_tolerance: Option<f64>,
    plateau_tolerance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDuhamel {
    m: Option<f64>,
    l: Option<f64>,
    allow_short_l: Option<bool>,
    times: Option<Vec<f64>>,
    residual_tolerance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLemma {
    kinds: Option<Vec<String>>,
    samples: Option<u64>,
    cutoff: Option<f64>,
    decay: Option<f64>,
    refine: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinear {
    samples: Option<usize>,
    plateau_tolerance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPseudoConformal {
    times: Option<Vec<f64>>,
    target_points: Option<usize>,
    target_half_width: Option<f64>,
    mass_tolerance: Option<f64>,
    residual_tolerance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCheckpoint {
    every_steps: Option<u64>,
    every_seconds: Option<f64>,
}

// ---- defaults ----------------------------------------------------------

/// Reference grid, datum and solver settings for a dimension.
fn reference_setup(d: usize) -> (GridConfig, DatumConfig, SolverConfigSection) {
    let (points, half_width, sigma, t_end, every) = match d {
        3 => (64, 16.0 * PI, 1.5, 8.0, 50),
        2 => (256, 32.0 * PI, 1.0, 12.0, 40),
        _ => (1024, 64.0 * PI, 1.0, 12.0, 40),
    };
    (
        GridConfig {
            dimension: d,
            points,
            half_width,
        },
        DatumConfig {
            sigma,
            amplitude: 0.5,
            center: vec![0.0; d],
        },
        SolverConfigSection {
            dt: 1e-3,
            t_end,
            snapshot_every: every,
            dealiasing: false,
            energy_tolerance: 1e-6,
            max_dt_halvings: 1,
        },
    )
}

/// Space-time Strichartz exponent for the headline models; `2 + 4/d` +
/// nonlinearity-dependent choices otherwise.
fn strichartz_exponent(d: usize, q: u32) -> f64 {
    match (d, q) {
        (3, 5) => 10.0,
        (3, 3) => 5.0,
        (2, 5) => 8.0,
        _ => 2.0 + 4.0 / d as f64,
    }
}

fn sobolev_order(d: usize, q: u32) -> f64 {
    if (d, q) == (3, 3) {
        4.0
    } else {
        3.0
    }
}

// ---- parsing -----------------------------------------------------------

/// Reads, defaults and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text).map_err(|e| match e {
        ConfigError::Syntax { message, .. } => ConfigError::Syntax {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })?;
    resolve(raw)
}

struct Collector(Vec<String>);

impl Collector {
    fn push(&mut self, field: &str, msg: impl fmt::Display) {
        self.0.push(format!("{field}: {msg}"));
    }

    fn positive(&mut self, field: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.push(field, format!("must be positive and finite, got {v}"));
        }
    }

    fn missing(&mut self, field: &str, present: bool) {
        if !present {
            self.push(field, "is required for this scenario");
        }
    }
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut errs = Collector(Vec::new());
    match raw.schema_version {
        None => errs.push("schema_version", "is required"),
        Some(v) if v != SCHEMA_VERSION => {
            errs.push("schema_version", format!("unsupported version {v} (expected {SCHEMA_VERSION})"))
        }
        _ => {}
    }
    let scenario = match raw.scenario.as_deref() {
        None => {
            errs.push("scenario", "is required");
            None
        }
        Some(s) => match s.parse::<Scenario>() {
            Ok(s) => Some(s),
            Err(e) => {
                errs.push("scenario", e);
                None
            }
        },
    };
    let Some(scenario) = scenario else {
        return Err(ConfigError::Invalid(errs.0));
    };

    let rg = raw.grid.unwrap_or_default();
    let re = raw.equation;
    let rdu = raw.duhamel;
    let rl = raw.lemma;
    let rpc = raw.pseudo_conformal;
    for field in scenario.required_fields() {
        let present = match *field {
            "schema_version" | "scenario" => true,
            "grid.dimension" => rg.dimension.is_some(),
            "equation.exponent" => re.as_ref().is_some_and(|e| e.exponent.is_some()),
            "duhamel.m" => rdu.as_ref().is_some_and(|d| d.m.is_some()),
            "duhamel.times" => rdu.as_ref().is_some_and(|d| d.times.is_some()),
            "lemma.kinds" => rl.as_ref().is_some_and(|l| l.kinds.is_some()),
            "pseudo_conformal.times" => rpc.as_ref().is_some_and(|p| p.times.is_some()),
            other => unreachable!("unlisted required field {other}"),
        };
        errs.missing(field, present);
    }

    // dimension and model
    let model = scenario.model();
    let dimension = match (model, rg.dimension) {
        (Some((d, _)), Some(given)) if given != d => {
            errs.push("grid.dimension", format!("{scenario} runs in d = {d}, got {given}"));
            d
        }
        (Some((d, _)), _) => d,
        (None, Some(d)) => d,
        (None, None) => match scenario {
            Scenario::LemmaSuite => 3,
            Scenario::PseudoConformal => 2,
            _ => 2,
        },
    };
    if !(1..=3).contains(&dimension) {
        errs.push("grid.dimension", format!("must be 1, 2 or 3, got {dimension}"));
        return Err(ConfigError::Invalid(errs.0));
    }
    if scenario == Scenario::LemmaSuite && dimension != 3 {
        errs.push("grid.dimension", "lemma suites are three-dimensional");
    }

    let (mut grid, mut datum, mut solver) = reference_setup(dimension);
    match scenario {
        Scenario::LinearDispersive => {
            grid.points = 256;
            grid.half_width = 32.0 * PI;
            datum.sigma = 1.0;
            datum.amplitude = 1.0;
        }
        Scenario::LemmaSuite => {
            grid.points = 32;
            grid.half_width = 8.0 * PI;
        }
        Scenario::PseudoConformal => {
            grid.points = 128;
            grid.half_width = 10.0 * PI;
            datum.sigma = 1.0;
            datum.amplitude = 1.0;
            solver.t_end = 1.0;
            solver.snapshot_every = 10;
        }
        _ => {}
    }

    // grid
    if let Some(p) = rg.points {
        grid.points = p;
    }
    match (rg.half_width, rg.half_width_pi) {
        (Some(_), Some(_)) => errs.push("grid.half_width", "give either half_width or half_width_pi, not both"),
        (Some(h), None) => grid.half_width = h,
        (None, Some(h)) => grid.half_width = h * PI,
        (None, None) => {}
    }
    grid.dimension = dimension;
    if grid.points < 8 || !grid.points.is_power_of_two() {
        errs.push("grid.points", format!("must be a power of two and at least 8, got {}", grid.points));
    }
    errs.positive("grid.half_width", grid.half_width);
    let grid_ok = grid.spec().is_ok();

    // equation
    let equation = match scenario {
        Scenario::LemmaSuite | Scenario::LinearDispersive => {
            if re.is_some() {
                errs.push("equation", format!("not used by {scenario}"));
            }
            None
        }
        _ => {
            let re = re.unwrap_or_default();
            let default_q = match (model, scenario) {
                (Some((_, q)), _) => q,
                (None, Scenario::PseudoConformal) => (1 + 4 / dimension) as u32,
                _ => 5,
            };
            let exponent = re.exponent.unwrap_or(default_q);
            if let Some((_, q)) = model {
                if exponent != q {
                    errs.push("equation.exponent", format!("{scenario} integrates q = {q}, got {exponent}"));
                }
            }
            if exponent < 2 {
                errs.push("equation.exponent", format!("must be at least 2, got {exponent}"));
            }
            let linear = re.linear.unwrap_or(scenario == Scenario::PseudoConformal);
            if model.is_some() && linear {
                errs.push("equation.linear", format!("{scenario} integrates the nonlinear equation"));
            }
            if scenario == Scenario::PseudoConformal && exponent as usize * dimension != 4 + dimension {
                errs.push(
                    "equation.exponent",
                    format!("pseudo-conformal runs need the mass-critical q = 1 + 4/d, got q = {exponent} in d = {dimension}"),
                );
            }
            Some(EquationConfig { exponent, linear })
        }
    };

    // datum
    let datum = if scenario == Scenario::LemmaSuite {
        if raw.datum.is_some() {
            errs.push("datum", "not used by lemma-suite");
        }
        None
    } else {
        let rd = raw.datum.unwrap_or_default();
        if let Some(s) = rd.sigma {
            datum.sigma = s;
        }
        if let Some(a) = rd.amplitude {
            datum.amplitude = a;
        }
        if let Some(c) = rd.center {
            datum.center = c;
        }
        errs.positive("datum.sigma", datum.sigma);
        if !datum.amplitude.is_finite() {
            errs.push("datum.amplitude", "must be finite");
        }
        if datum.center.len() != dimension {
            errs.push(
                "datum.center",
                format!("needs {dimension} coordinates, got {}", datum.center.len()),
            );
        }
        if datum.center.iter().any(|c| !c.is_finite() || c.abs() >= grid.half_width) {
            errs.push("datum.center", "must lie inside the box");
        }
        Some(datum)
    };

    // solver
    let uses_solver = scenario.evolves() || scenario == Scenario::PseudoConformal;
    let solver = if !uses_solver {
        if raw.solver.is_some() {
            errs.push("solver", format!("not used by {scenario}"));
        }
        None
    } else {
        let rs = raw.solver.unwrap_or_default();
        if let Some(v) = rs.dt {
            solver.dt = v;
        }
        if let Some(v) = rs.t_end {
            solver.t_end = v;
        }
        if let Some(v) = rs.snapshot_every {
            solver.snapshot_every = v;
        }
        if let Some(v) = rs.dealiasing {
            solver.dealiasing = v;
        }
        if let Some(v) = rs.energy_tolerance {
            solver.energy_tolerance = v;
        }
        if let Some(v) = rs.max_dt_halvings {
            solver.max_dt_halvings = v;
        }
        errs.positive("solver.dt", solver.dt);
        errs.positive("solver.t_end", solver.t_end);
        errs.positive("solver.energy_tolerance", solver.energy_tolerance);
        if solver.snapshot_every == 0 {
            errs.push("solver.snapshot_every", "must be at least 1");
        }
        if solver.dt > 0.0 && solver.t_end > 0.0 {
            let cfg = nlsdecay_core::SolverConfig::new(solver.dt, solver.t_end, solver.snapshot_every.max(1));
            if let Err(e) = cfg.steps() {
                errs.push("solver.t_end", e);
            }
        }
        Some(solver)
    };

    // diagnostics
    let diagnostics = match scenario {
        Scenario::LemmaSuite | Scenario::PseudoConformal => {
            if raw.diagnostics.is_some() {
                errs.push("diagnostics", format!("not used by {scenario}"));
            }
            None
        }
        _ => {
            let rd = raw.diagnostics.unwrap_or_default();
            let q = equation.as_ref().map_or(5, |e| e.exponent);
            let every = solver.as_ref().map_or(1, |s| s.snapshot_every);
            let (slope, tol) = match scenario {
                Scenario::LinearDispersive => (Some(-(dimension as f64) / 2.0), Some(0.02)),
                Scenario::Decay2dQuintic => (Some(-1.0), Some(0.15)),
                Scenario::Decay3dQuintic | Scenario::Decay3dCubic => (Some(-1.5), Some(0.3)),
                _ => (None, None),
            };
            let d = DiagnosticsConfig {
                every: rd.every.unwrap_or(every),
                sobolev_order: rd.sobolev_order.unwrap_or(sobolev_order(dimension, q)),
                strichartz_q: rd.strichartz_q.unwrap_or(strichartz_exponent(dimension, q)),
                strichartz_r: rd.strichartz_r.unwrap_or(strichartz_exponent(dimension, q)),
                sup_upsample: rd.sup_upsample.unwrap_or(if scenario.evolves() { 2 } else { 1 }),
                validity_tol: rd.validity_tol.unwrap_or(1e-3),
                fit_window: rd.fit_window,
                expected_slope: rd.expected_slope.or(slope),
                slope_tolerance: rd.slope_tolerance.or(tol),
                plateau_tolerance: rd.plateau_tolerance.unwrap_or(0.05),
            };
            if d.every == 0 {
                errs.push("diagnostics.every", "must be at least 1");
            }
            if d.sobolev_order < 0.0 || !d.sobolev_order.is_finite() {
                errs.push("diagnostics.sobolev_order", "must be nonnegative");
            }
            if !(d.strichartz_q >= 1.0) {
                errs.push("diagnostics.strichartz_q", "must be at least 1");
            }
            if !(d.strichartz_r >= 1.0) {
                errs.push("diagnostics.strichartz_r", "must be at least 1");
            }
            if d.sup_upsample == 0 || !d.sup_upsample.is_power_of_two() {
                errs.push("diagnostics.sup_upsample", "must be a power of two");
            }
            if !(d.validity_tol > 0.0 && d.validity_tol < 1.0) {
                errs.push("diagnostics.validity_tol", "must lie in (0, 1)");
            }
            if let Some([lo, hi]) = d.fit_window {
                if !(lo > 0.0 && hi > lo) {
                    errs.push("diagnostics.fit_window", format!("needs 0 < lo < hi, got [{lo}, {hi}]"));
                }
                if let Some(s) = &solver {
                    if hi > s.t_end * (1.0 + 1e-12) {
                        errs.push("diagnostics.fit_window", format!("ends after t_end = {}", s.t_end));
                    }
                }
            }
            if let Some(t) = d.slope_tolerance {
                errs.positive("diagnostics.slope_tolerance", t);
            }
            errs.positive("diagnostics.plateau_tolerance", d.plateau_tolerance);
            Some(d)
        }
    };

    // duhamel
    let duhamel = match rdu {
        Some(r) if scenario.evolves() => {
            let t_end = solver.as_ref().map_or(0.0, |s| s.t_end);
            let d = DuhamelConfig {
                m: r.m.unwrap_or(1.0),
                l: r.l.unwrap_or(100.0 * r.m.unwrap_or(1.0)),
                allow_short_l: r.allow_short_l.unwrap_or(false),
                times: r.times.unwrap_or_else(|| vec![0.5 * t_end, t_end]),
                residual_tolerance: r.residual_tolerance.unwrap_or(1e-3),
            };
            errs.positive("duhamel.m", d.m);
            errs.positive("duhamel.l", d.l);
            errs.positive("duhamel.residual_tolerance", d.residual_tolerance);
            if d.m > 0.0 && d.l < 100.0 * d.m && !d.allow_short_l {
                errs.push(
                    "duhamel.l",
                    format!("L = {} is below 100·M = {} (set allow_short_l to override)", d.l, 100.0 * d.m),
                );
            }
            if d.times.is_empty() {
                errs.push("duhamel.times", "needs at least one time");
            }
            if let Some(s) = &solver {
                let spacing = s.dt * s.snapshot_every as f64;
                for &t in &d.times {
                    if !(t > 0.0 && t <= s.t_end * (1.0 + 1e-12)) {
                        errs.push("duhamel.times", format!("{t} is outside (0, t_end = {}]", s.t_end));
                    } else if t < 2.0 * d.m * (1.0 - 1e-12) {
                        errs.push("duhamel.times", format!("{t} is below 2M = {}", 2.0 * d.m));
                    }
                    let on_grid = |x: f64| ((x / spacing).round() * spacing - x).abs() <= 1e-9 * spacing;
                    if spacing > 0.0 && t < s.t_end * (1.0 - 1e-12) && !on_grid(t) {
                        errs.push("duhamel.times", format!("{t} is not a snapshot time (spacing {spacing})"));
                    }
                    if spacing > 0.0 && !on_grid(d.m) {
                        errs.push("duhamel.m", format!("M = {} is not a multiple of the snapshot spacing {spacing}", d.m));
                    }
                }
            }
            Some(d)
        }
        Some(_) => {
            errs.push("duhamel", format!("not used by {scenario}"));
            None
        }
        None => None,
    };

    // lemma
    let lemma = match rl {
        Some(r) if scenario == Scenario::LemmaSuite => {
            let mut kinds = Vec::new();
            for k in r.kinds.unwrap_or_default() {
                match k.parse::<LemmaKind>() {
                    Ok(k) => kinds.push(k),
                    Err(e) => errs.push("lemma.kinds", e),
                }
            }
            let max_k = if grid_ok { grid.spec().unwrap().max_wavenumber() } else { f64::INFINITY };
            let l = LemmaConfig {
                kinds,
                samples: r.samples.unwrap_or(1000),
                cutoff: r.cutoff.unwrap_or(0.5 * max_k),
                decay: r.decay.unwrap_or(3.0),
                refine: r.refine.unwrap_or(true),
            };
            if l.kinds.is_empty() {
                errs.push("lemma.kinds", "needs at least one kind");
            }
            if l.samples == 0 {
                errs.push("lemma.samples", "must be at least 1");
            }
            if !(l.cutoff >= 0.0 && l.cutoff <= max_k) {
                errs.push("lemma.cutoff", format!("must lie in [0, {max_k}], got {}", l.cutoff));
            }
            if !l.decay.is_finite() {
                errs.push("lemma.decay", "must be finite");
            }
            Some(l)
        }
        Some(_) => {
            errs.push("lemma", format!("not used by {scenario}"));
            None
        }
        None => None,
    };

    // linear
    let linear = match (raw.linear, scenario) {
        (r, Scenario::LinearDispersive) => {
            let r = r.unwrap_or_default();
            let l = LinearConfig {
                samples: r.samples.unwrap_or(25),
                plateau_tolerance: r.plateau_tolerance.unwrap_or(0.02),
            };
            if l.samples < 8 {
                errs.push("linear.samples", "needs at least 8 sample times for a fit");
            }
            errs.positive("linear.plateau_tolerance", l.plateau_tolerance);
            Some(l)
        }
        (Some(_), _) => {
            errs.push("linear", format!("not used by {scenario}"));
            None
        }
        (None, _) => None,
    };

    // pseudo-conformal
    let pseudo_conformal = match rpc {
        Some(r) if scenario == Scenario::PseudoConformal => {
            let p = PseudoConformalConfig {
                times: r.times.unwrap_or_default(),
                target_points: r.target_points.unwrap_or(128),
                target_half_width: r.target_half_width.unwrap_or(8.0 * PI),
                mass_tolerance: r.mass_tolerance.unwrap_or(1e-8),
                residual_tolerance: r.residual_tolerance.unwrap_or(1e-4),
            };
            if p.times.is_empty() {
                errs.push("pseudo_conformal.times", "needs at least one time");
            }
            if p.target_points < 8 || !p.target_points.is_power_of_two() {
                errs.push("pseudo_conformal.target_points", "must be a power of two and at least 8");
            }
            errs.positive("pseudo_conformal.target_half_width", p.target_half_width);
            if let Some(s) = &solver {
                let spacing = s.dt * s.snapshot_every as f64;
                for &t in &p.times {
                    // 1/t and 1/t - spacing must both be stored
                    // the residual check pairs 1/t with 1/t - spacing
                    if !(t > 0.0) || 1.0 / t > s.t_end * (1.0 + 1e-12) || 1.0 / t < 2.0 * spacing * (1.0 - 1e-12) {
                        errs.push(
                            "pseudo_conformal.times",
                            format!("1/t for t = {t} must lie in [{}, t_end = {}]", 2.0 * spacing, s.t_end),
                        );
                    } else if p.target_half_width / t > grid.half_width {
                        errs.push(
                            "pseudo_conformal.target_half_width",
                            format!("x/t leaves the box of v at t = {t}"),
                        );
                    }
                }
            }
            Some(p)
        }
        Some(_) => {
            errs.push("pseudo_conformal", format!("not used by {scenario}"));
            None
        }
        None => None,
    };

    let checkpoint = if scenario.evolves() {
        let rc = raw.checkpoint.unwrap_or_default();
        let c = CheckpointConfig {
            every_steps: rc.every_steps.unwrap_or(1000),
            every_seconds: rc.every_seconds,
        };
        if c.every_steps == 0 {
            errs.push("checkpoint.every_steps", "must be at least 1");
        }
        if let Some(s) = c.every_seconds {
            errs.positive("checkpoint.every_seconds", s);
        }
        Some(c)
    } else {
        if raw.checkpoint.is_some() {
            errs.push("checkpoint", format!("not used by {scenario}"));
        }
        None
    };

    if !errs.0.is_empty() {
        return Err(ConfigError::Invalid(errs.0));
    }
    Ok(ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        scenario,
        seed: raw.seed.unwrap_or(0),
        output_dir: raw
            .output_dir
            .unwrap_or_else(|| PathBuf::from("runs").join(scenario.name())),
        grid,
        equation,
        datum,
        solver,
        diagnostics,
        duhamel,
        lemma,
        linear,
        pseudo_conformal,
        checkpoint,
    })
}
