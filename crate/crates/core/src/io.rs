//! Run configuration, diagnostic CSV files and binary snapshots.
//!
//! Configuration files are TOML with the sections `[grid]`, `[model]`,
//! `[stepper]`, `[run]`, `[initial]`, `[sweep]`, `[contract]` and
//! `[converge]`. Only `grid.n` and `run.t_final` are required.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::EnergyReport;
use crate::error::{invalid_param, Error, Result};
use crate::model::{ModelParams, PotentialKind, PotentialSpec, RegMode, SystemState, Tendency};
use crate::spectral::{Grid, SpectralField, VelocityField};
use crate::timestepper::{Bootstrap, ExplicitHistory, Scheme, StepperConfig};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Initial data of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// Seeded band-limited random fields scaled to `‖u‖_H`, `‖φ‖_V`, `‖π‖_H`.
    Random {
        u_norm: f64,
        phi_norm: f64,
        pi_norm: f64,
    },
    /// `u = 0`, `φ ≡ 1`, `π = 0`.
    GroundPlus,
    /// `u = 0`, `φ ≡ -1`, `π = 0`.
    GroundMinus,
    Zero,
    /// `u = 0` with spatially constant `φ`, `π`.
    Constant { phi: f64, pi: f64 },
    /// Taylor–Green velocity of the given amplitude, `φ = π = 0`.
    TaylorGreen { amplitude: f64 },
    /// Taylor–Green velocity plus an analytic (Poisson-kernel) `φ`, both
    /// scaled by `amplitude`; `π = 0`.
    Analytic { amplitude: f64 },
    Snapshot { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Multipliers applied to the initial data.
    pub scales: Vec<f64>,
    /// Allowed relative spread of the final-window bounds.
    pub tolerance: f64,
    /// Fraction of the run forming the final window.
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractConfig {
    pub perturbation: f64,
    /// Allowed relative disagreement of `C(T)` when the perturbation halves.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConvergeKind {
    #[default]
    Temporal,
    Spatial,
    Truncation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeConfig {
    pub kind: ConvergeKind,
    pub resolutions: Vec<usize>,
    pub dts: Vec<f64>,
    /// Truncation levels `n` of `f_n`.
    pub levels: Vec<f64>,
    /// Reference step is `min(dts) / reference_factor`.
    pub reference_factor: usize,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: Grid,
    pub params: ModelParams,
    pub stepper: StepperConfig,
    pub t_final: f64,
    /// Diagnostics cadence in steps.
    pub output_every: usize,
    /// Snapshot cadence in steps.
    pub snapshot_every: Option<usize>,
    pub seed: u64,
    pub initial: InitialSpec,
    pub sweep: SweepConfig,
    pub contract: ContractConfig,
    pub converge: ConvergeConfig,
    /// Accepted but theoretically unsupported settings.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
enum PotentialName {
    #[default]
    DoubleWell,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
enum InitialKind {
    #[default]
    Random,
    GroundPlus,
    GroundMinus,
    Zero,
    Constant,
    TaylorGreen,
    Analytic,
    Snapshot,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    grid: GridSection,
    model: ModelSection,
    stepper: StepperSection,
    run: RunSection,
    initial: InitialSection,
    sweep: SweepSection,
    contract: ContractSection,
    converge: ConvergeSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GridSection {
    dim: usize,
    n: Option<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { dim: 2, n: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelSection {
    kappa: f64,
    delta: f64,
    sigma: f64,
    epsilon: f64,
    potential: PotentialName,
    potential_coeffs: Vec<f64>,
    reg_mode: RegMode,
    truncation: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::default();
        Self {
            kappa: p.kappa,
            delta: p.delta,
            sigma: p.sigma,
            epsilon: p.epsilon,
            potential: PotentialName::DoubleWell,
            potential_coeffs: Vec::new(),
            reg_mode: p.reg_mode,
            truncation: p.truncation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StepperSection {
    scheme: Scheme,
    dt: f64,
    cfl_safety: f64,
    adaptive: bool,
    bootstrap: Bootstrap,
}

impl Default for StepperSection {
    fn default() -> Self {
        let s = StepperConfig::default();
        Self {
            scheme: s.scheme,
            dt: s.dt,
            cfl_safety: s.cfl_safety,
            adaptive: s.adaptive,
            bootstrap: s.bootstrap,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunSection {
    t_final: Option<f64>,
    output_every: usize,
    snapshot_every: usize,
    seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            t_final: None,
            output_every: 10,
            snapshot_every: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InitialSection {
    kind: InitialKind,
    u_norm: f64,
    phi_norm: f64,
    pi_norm: f64,
    amplitude: f64,
    phi: f64,
    pi: f64,
    path: Option<String>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Random,
            u_norm: 0.1,
            phi_norm: 0.5,
            pi_norm: 0.1,
            amplitude: 1.0,
            phi: 0.0,
            pi: 0.0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    scales: Vec<f64>,
    tolerance: f64,
    window: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 4.0, 16.0],
            tolerance: 0.1,
            window: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ContractSection {
    perturbation: f64,
    tolerance: f64,
}

impl Default for ContractSection {
    fn default() -> Self {
        Self {
            perturbation: 1e-6,
            tolerance: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConvergeSection {
    kind: ConvergeKind,
    resolutions: Vec<usize>,
    dts: Vec<f64>,
    levels: Vec<f64>,
    reference_factor: usize,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self {
            kind: ConvergeKind::Temporal,
            resolutions: vec![16, 32, 64],
            dts: vec![4e-3, 2e-3, 1e-3],
            levels: vec![2.0, 4.0, 8.0],
            reference_factor: 50,
        }
    }
}

/// Every accepted key, by section.
pub const CONFIG_KEYS: &[(&str, &[&str])] = &[
    ("grid", &["dim", "n"]),
    (
        "model",
        &[
            "kappa",
            "delta",
            "sigma",
            "epsilon",
            "potential",
            "potential_coeffs",
            "reg_mode",
            "truncation",
        ],
    ),
    ("stepper", &["scheme", "dt", "cfl_safety", "adaptive", "bootstrap"]),
    ("run", &["t_final", "output_every", "snapshot_every", "seed"]),
    (
        "initial",
        &["kind", "u_norm", "phi_norm", "pi_norm", "amplitude", "phi", "pi", "path"],
    ),
    ("sweep", &["scales", "tolerance", "window"]),
    ("contract", &["perturbation", "tolerance"]),
    (
        "converge",
        &["kind", "resolutions", "dts", "levels", "reference_factor"],
    ),
];

const FLOAT_KEYS: &[(&str, &str)] = &[
    ("model", "kappa"),
    ("model", "delta"),
    ("model", "sigma"),
    ("model", "epsilon"),
    ("model", "potential_coeffs"),
    ("model", "truncation"),
    ("stepper", "dt"),
    ("stepper", "cfl_safety"),
    ("run", "t_final"),
    ("initial", "u_norm"),
    ("initial", "phi_norm"),
    ("initial", "pi_norm"),
    ("initial", "amplitude"),
    ("initial", "phi"),
    ("initial", "pi"),
    ("sweep", "scales"),
    ("sweep", "tolerance"),
    ("sweep", "window"),
    ("contract", "perturbation"),
    ("contract", "tolerance"),
    ("converge", "dts"),
    ("converge", "levels"),
];

fn known(section: &str, key: &str) -> bool {
    CONFIG_KEYS
        .iter()
        .any(|(s, keys)| *s == section && keys.contains(&key))
}

/// Parse a configuration text. Relative snapshot paths are resolved against
/// the working directory.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &[], None)
}

/// Parse a configuration text, apply `key=value` overrides in order (last
/// wins) and resolve relative paths against `base_dir`.
pub fn parse_config_with(
    text: &str,
    overrides: &[String],
    base_dir: Option<&Path>,
) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::ConfigSyntax {
            line,
            msg: e.message().to_string(),
        }
    })?;
    check_keys(&table, text)?;
    for arg in overrides {
        apply_override(&mut table, arg)?;
    }
    coerce_floats(&mut table);
    let file: ConfigFile = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::ConfigValue(e.message().to_string()))?;
    RunConfig::from_file(file, base_dir)
}

/// Read, override and validate a configuration file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    parse_config_with(&text, overrides, path.parent())
}

fn check_keys(table: &toml::Table, text: &str) -> Result<()> {
    for (section, value) in table {
        let Some(inner) = value.as_table() else {
            return Err(Error::UnknownKey {
                key: section.clone(),
                line: locate(text, None, section),
            });
        };
        if !CONFIG_KEYS.iter().any(|(s, _)| s == section) {
            return Err(Error::UnknownKey {
                key: section.clone(),
                line: locate(text, None, section),
            });
        }
        for key in inner.keys() {
            if !known(section, key) {
                return Err(Error::UnknownKey {
                    key: format!("{section}.{key}"),
                    line: locate(text, Some(section), key),
                });
            }
        }
    }
    Ok(())
}

/// Line of `key` inside `[section]` (or of the `[key]` header when no
/// section is given).
fn locate(text: &str, section: Option<&str>, key: &str) -> usize {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = Some(h.trim().to_string());
            if section.is_none() && h.trim() == key {
                return i + 1;
            }
            continue;
        }
        let lhs = t.split('=').next().unwrap_or("").trim();
        let matches_here = match section {
            Some(s) => current.as_deref() == Some(s) && lhs == key,
            None => current.is_none() && lhs == key,
        };
        if matches_here {
            return i + 1;
        }
    }
    0
}

/// Resolve an override key (`section.key`, or a bare key unique to one
/// section) and set its value. `none` removes the key.
fn apply_override(table: &mut toml::Table, arg: &str) -> Result<()> {
    let fail = |msg: String| Error::Override {
        arg: arg.to_string(),
        msg,
    };
    let (path, raw) = arg
        .split_once('=')
        .ok_or_else(|| fail("expected key=value".into()))?;
    let path = path.trim();
    let raw = raw.trim();
    let (section, key) = match path.split_once('.') {
        Some((s, k)) => (s.to_string(), k.to_string()),
        None => {
            let owners: Vec<&str> = CONFIG_KEYS
                .iter()
                .filter(|(_, keys)| keys.contains(&path))
                .map(|(s, _)| *s)
                .collect();
            match owners.as_slice() {
                [s] => (s.to_string(), path.to_string()),
                [] => return Err(fail(format!("unknown key `{path}`"))),
                _ => {
                    return Err(fail(format!(
                        "`{path}` is ambiguous; use one of {}",
                        owners
                            .iter()
                            .map(|s| format!("{s}.{path}"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    )))
                }
            }
        }
    };
    if !known(&section, &key) {
        return Err(fail(format!("unknown key `{section}.{key}`")));
    }
    let entry = table
        .entry(section)
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let inner = entry
        .as_table_mut()
        .ok_or_else(|| fail("section is not a table".into()))?;
    if raw == "none" {
        inner.remove(&key);
        return Ok(());
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    inner.insert(key, value);
    Ok(())
}

fn coerce_floats(table: &mut toml::Table) {
    for (section, key) in FLOAT_KEYS {
        let Some(v) = table
            .get_mut(*section)
            .and_then(|s| s.as_table_mut())
            .and_then(|s| s.get_mut(*key))
        else {
            continue;
        };
        match v {
            toml::Value::Integer(i) => *v = toml::Value::Float(*i as f64),
            toml::Value::Array(items) => {
                for item in items {
                    if let toml::Value::Integer(i) = item {
                        *item = toml::Value::Float(*i as f64);
                    }
                }
            }
            _ => {}
        }
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid_param(field, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid_param(field, format!("must be non-negative and finite, got {v}")))
    }
}

impl RunConfig {
    /// Defaults for every section on the given grid.
    pub fn new(grid: Grid, t_final: f64) -> Self {
        let mut file = ConfigFile::default();
        file.grid = GridSection {
            dim: grid.dim(),
            n: Some(grid.n()),
        };
        file.run.t_final = Some(t_final);
        Self::from_file(file, None).expect("defaults are valid")
    }

    fn from_file(file: ConfigFile, base_dir: Option<&Path>) -> Result<Self> {
        let n = file
            .grid
            .n
            .ok_or_else(|| invalid_param("grid.n", "required"))?;
        let grid = Grid::new(file.grid.dim, n)?;

        let m = &file.model;
        let potential = match m.potential {
            PotentialName::DoubleWell => {
                if !m.potential_coeffs.is_empty() {
                    return Err(invalid_param(
                        "model.potential_coeffs",
                        "coefficients are only used with potential = \"polynomial\"",
                    ));
                }
                PotentialSpec::double_well()
            }
            PotentialName::Polynomial => PotentialSpec::polynomial(m.potential_coeffs.clone())?,
        };
        let params = ModelParams {
            kappa: m.kappa,
            delta: m.delta,
            sigma: m.sigma,
            epsilon: m.epsilon,
            potential,
            reg_mode: m.reg_mode,
            truncation: m.truncation,
        };
        let warnings = params.validate()?;

        let s = &file.stepper;
        let stepper = StepperConfig {
            dt: s.dt,
            scheme: s.scheme,
            cfl_safety: s.cfl_safety,
            bootstrap: s.bootstrap,
            adaptive: s.adaptive,
        };
        stepper.validate()?;

        let r = &file.run;
        let t_final = positive(
            "run.t_final",
            r.t_final.ok_or_else(|| invalid_param("run.t_final", "required"))?,
        )?;
        if r.output_every == 0 {
            return Err(invalid_param("run.output_every", "must be at least 1"));
        }
        if r.seed > i64::MAX as u64 {
            return Err(invalid_param("run.seed", "must fit in a signed 64-bit integer"));
        }

        let i = &file.initial;
        let initial = match i.kind {
            InitialKind::Random => InitialSpec::Random {
                u_norm: non_negative("initial.u_norm", i.u_norm)?,
                phi_norm: non_negative("initial.phi_norm", i.phi_norm)?,
                pi_norm: non_negative("initial.pi_norm", i.pi_norm)?,
            },
            InitialKind::GroundPlus => InitialSpec::GroundPlus,
            InitialKind::GroundMinus => InitialSpec::GroundMinus,
            InitialKind::Zero => InitialSpec::Zero,
            InitialKind::Constant => {
                if !(i.phi.is_finite() && i.pi.is_finite()) {
                    return Err(invalid_param("initial.phi", "constant data must be finite"));
                }
                InitialSpec::Constant { phi: i.phi, pi: i.pi }
            }
            InitialKind::TaylorGreen => InitialSpec::TaylorGreen {
                amplitude: non_negative("initial.amplitude", i.amplitude)?,
            },
            InitialKind::Analytic => InitialSpec::Analytic {
                amplitude: non_negative("initial.amplitude", i.amplitude)?,
            },
            InitialKind::Snapshot => {
                let raw = i
                    .path
                    .as_ref()
                    .ok_or_else(|| invalid_param("initial.path", "required for snapshot data"))?;
                let mut path = PathBuf::from(raw);
                if path.is_relative() {
                    if let Some(dir) = base_dir {
                        path = dir.join(path);
                    }
                }
                if !path.is_file() {
                    return Err(invalid_param(
                        "initial.path",
                        format!("{} does not exist", path.display()),
                    ));
                }
                InitialSpec::Snapshot { path }
            }
        };

        let sw = &file.sweep;
        if sw.scales.is_empty() {
            return Err(invalid_param("sweep.scales", "at least one scale required"));
        }
        for &x in &sw.scales {
            positive("sweep.scales", x)?;
        }
        let sweep = SweepConfig {
            scales: sw.scales.clone(),
            tolerance: positive("sweep.tolerance", sw.tolerance)?,
            window: positive("sweep.window", sw.window)?,
        };
        if sweep.window > 1.0 {
            return Err(invalid_param("sweep.window", "must lie in (0, 1]"));
        }

        let contract = ContractConfig {
            perturbation: non_negative("contract.perturbation", file.contract.perturbation)?,
            tolerance: positive("contract.tolerance", file.contract.tolerance)?,
        };

        let c = &file.converge;
        for &dt in &c.dts {
            positive("converge.dts", dt)?;
        }
        for &l in &c.levels {
            positive("converge.levels", l)?;
        }
        if c.reference_factor == 0 {
            return Err(invalid_param("converge.reference_factor", "must be at least 1"));
        }
        let converge = ConvergeConfig {
            kind: c.kind,
            resolutions: c.resolutions.clone(),
            dts: c.dts.clone(),
            levels: c.levels.clone(),
            reference_factor: c.reference_factor,
        };

        Ok(Self {
            grid,
            params,
            stepper,
            t_final,
            output_every: r.output_every,
            snapshot_every: (r.snapshot_every > 0).then_some(r.snapshot_every),
            seed: r.seed,
            initial,
            sweep,
            contract,
            converge,
            warnings,
        })
    }

    fn to_file(&self) -> ConfigFile {
        let p = &self.params;
        let (potential, potential_coeffs) = match p.potential.kind() {
            PotentialKind::DoubleWell => (PotentialName::DoubleWell, Vec::new()),
            PotentialKind::Polynomial(c) => (PotentialName::Polynomial, c.clone()),
        };
        let mut initial = InitialSection::default();
        match &self.initial {
            InitialSpec::Random {
                u_norm,
                phi_norm,
                pi_norm,
            } => {
                initial.kind = InitialKind::Random;
                initial.u_norm = *u_norm;
                initial.phi_norm = *phi_norm;
                initial.pi_norm = *pi_norm;
            }
            InitialSpec::GroundPlus => initial.kind = InitialKind::GroundPlus,
            InitialSpec::GroundMinus => initial.kind = InitialKind::GroundMinus,
            InitialSpec::Zero => initial.kind = InitialKind::Zero,
            InitialSpec::Constant { phi, pi } => {
                initial.kind = InitialKind::Constant;
                initial.phi = *phi;
                initial.pi = *pi;
            }
            InitialSpec::TaylorGreen { amplitude } => {
                initial.kind = InitialKind::TaylorGreen;
                initial.amplitude = *amplitude;
            }
            InitialSpec::Analytic { amplitude } => {
                initial.kind = InitialKind::Analytic;
                initial.amplitude = *amplitude;
            }
            InitialSpec::Snapshot { path } => {
                initial.kind = InitialKind::Snapshot;
                initial.path = Some(path.display().to_string());
            }
        }
        ConfigFile {
            grid: GridSection {
                dim: self.grid.dim(),
                n: Some(self.grid.n()),
            },
            model: ModelSection {
                kappa: p.kappa,
                delta: p.delta,
                sigma: p.sigma,
                epsilon: p.epsilon,
                potential,
                potential_coeffs,
                reg_mode: p.reg_mode,
                truncation: p.truncation,
            },
            stepper: StepperSection {
                scheme: self.stepper.scheme,
                dt: self.stepper.dt,
                cfl_safety: self.stepper.cfl_safety,
                adaptive: self.stepper.adaptive,
                bootstrap: self.stepper.bootstrap,
            },
            run: RunSection {
                t_final: Some(self.t_final),
                output_every: self.output_every,
                snapshot_every: self.snapshot_every.unwrap_or(0),
                seed: self.seed,
            },
            initial,
            sweep: SweepSection {
                scales: self.sweep.scales.clone(),
                tolerance: self.sweep.tolerance,
                window: self.sweep.window,
            },
            contract: ContractSection {
                perturbation: self.contract.perturbation,
                tolerance: self.contract.tolerance,
            },
            converge: ConvergeSection {
                kind: self.converge.kind,
                resolutions: self.converge.resolutions.clone(),
                dts: self.converge.dts.clone(),
                levels: self.converge.levels.clone(),
                reference_factor: self.converge.reference_factor,
            },
        }
    }

    /// Canonical TOML echo with every default filled in; parsing it yields
    /// an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("config sections serialize")
    }
}

// ---------------------------------------------------------------------------
// Diagnostics CSV
// ---------------------------------------------------------------------------

pub const CSV_COLUMNS: [&str; 15] = [
    "t",
    "kinetic_macro",
    "kinetic_micro",
    "interface",
    "configuration",
    "total",
    "D0",
    "Dreg",
    "G",
    "D_cross",
    "phi_mean",
    "pi_mean",
    "f_integral",
    "crossterm",
    "residual",
];

/// CSV row of a report; unavailable entries are NaN.
pub fn csv_row(r: &EnergyReport) -> [f64; 15] {
    [
        r.t,
        r.kinetic_macro,
        r.kinetic_micro,
        r.interface,
        r.configuration,
        r.total,
        r.d0,
        r.dreg,
        r.g,
        r.d_cross.unwrap_or(f64::NAN),
        r.means.phi,
        r.means.pi,
        r.means.f_integral,
        r.galerkin_crossterm,
        r.residual.unwrap_or(f64::NAN),
    ]
}

/// Appends one row per report, writing the header before the first.
pub struct DiagnosticsWriter<W: Write> {
    out: W,
    header_written: bool,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            header_written: false,
        }
    }

    /// Continue a file whose header is already present.
    pub fn appending(out: W) -> Self {
        Self {
            out,
            header_written: true,
        }
    }

    pub fn write(&mut self, report: &EnergyReport) -> Result<()> {
        if !self.header_written {
            writeln!(self.out, "{}", CSV_COLUMNS.join(","))?;
            self.header_written = true;
        }
        let row: Vec<String> = csv_row(report).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(self.out, "{}", row.join(","))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parse a diagnostics CSV back into rows.
pub fn read_diagnostics(input: impl BufRead) -> Result<Vec<[f64; 15]>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != CSV_COLUMNS.join(",") {
                return Err(Error::ConfigSyntax {
                    line: 1,
                    msg: "unexpected CSV header".into(),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut row = [0.0; 15];
        let mut count = 0;
        for (slot, field) in row.iter_mut().zip(line.split(',')) {
            *slot = field.parse().map_err(|_| Error::ConfigSyntax {
                line: i + 1,
                msg: format!("bad number `{field}`"),
            })?;
            count += 1;
        }
        if count != 15 || line.split(',').count() != 15 {
            return Err(Error::ConfigSyntax {
                line: i + 1,
                msg: "expected 15 columns".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"NSACSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;
const FLAG_HISTORY: u32 = 1;
const DIGEST_LEN: usize = 32;

/// State, parameters and (optionally) the AB2 history needed for an exact
/// restart.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: SystemState,
    pub params: ModelParams,
    pub step: u64,
    pub history: Option<ExplicitHistory>,
}

impl Snapshot {
    /// Reject a snapshot whose grid differs from the configured one.
    pub fn check_grid(&self, grid: Grid) -> Result<()> {
        let g = self.state.grid();
        if g != grid {
            return Err(Error::Snapshot(format!(
                "snapshot holds a {}D grid with n = {}, run expects {}D with n = {}",
                g.dim(),
                g.n(),
                grid.dim(),
                grid.n()
            )));
        }
        Ok(())
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_field(buf: &mut Vec<u8>, f: &SpectralField) {
    for c in f.coeffs() {
        put_f64(buf, c.re);
        put_f64(buf, c.im);
    }
}

/// Serialize a snapshot: header, coefficient payload (u components, φ, π in
/// lattice order, then the optional history), SHA-256 trailer.
pub fn encode_snapshot(snap: &Snapshot) -> Vec<u8> {
    let grid = snap.state.grid();
    let p = &snap.params;
    let mut buf = Vec::new();
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    put_u32(&mut buf, SNAPSHOT_VERSION);
    put_u32(&mut buf, grid.dim() as u32);
    put_u32(&mut buf, grid.n() as u32);
    put_u32(&mut buf, if snap.history.is_some() { FLAG_HISTORY } else { 0 });
    buf.extend_from_slice(&snap.step.to_le_bytes());
    put_f64(&mut buf, snap.state.t);
    for v in [p.kappa, p.delta, p.sigma, p.epsilon] {
        put_f64(&mut buf, v);
    }
    match p.potential.kind() {
        PotentialKind::DoubleWell => {
            put_u32(&mut buf, 0);
            put_u32(&mut buf, 0);
        }
        PotentialKind::Polynomial(c) => {
            put_u32(&mut buf, 1);
            put_u32(&mut buf, c.len() as u32);
            for &a in c {
                put_f64(&mut buf, a);
            }
        }
    }
    put_u32(
        &mut buf,
        match p.reg_mode {
            RegMode::Linear => 0,
            RegMode::Variational => 1,
        },
    );
    put_u32(&mut buf, p.truncation.is_some() as u32);
    put_f64(&mut buf, p.truncation.unwrap_or(0.0));

    for c in snap.state.u.components() {
        put_field(&mut buf, c);
    }
    put_field(&mut buf, &snap.state.phi);
    put_field(&mut buf, &snap.state.pi);
    if let Some(h) = &snap.history {
        put_f64(&mut buf, h.dt);
        for c in h.tendency.u.components() {
            put_field(&mut buf, c);
        }
        put_field(&mut buf, &h.tendency.phi);
        put_field(&mut buf, &h.tendency.pi);
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::Snapshot("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn field(&mut self, grid: Grid) -> Result<SpectralField> {
        let mut coeffs = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = self.f64()?;
            let im = self.f64()?;
            coeffs.push(Complex64::new(re, im));
        }
        SpectralField::from_coeffs(grid, coeffs)
    }

    fn velocity(&mut self, grid: Grid) -> Result<VelocityField> {
        let comps = (0..grid.dim())
            .map(|_| self.field(grid))
            .collect::<Result<Vec<_>>>()?;
        VelocityField::new(comps)
    }
}

/// Inverse of [`encode_snapshot`]; validates magic, checksum, version and the
/// velocity invariants.
pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < SNAPSHOT_MAGIC.len() || &bytes[..SNAPSHOT_MAGIC.len()] != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("not a snapshot file".into()));
    }
    if bytes.len() < SNAPSHOT_MAGIC.len() + DIGEST_LEN {
        return Err(Error::Checksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }
    let mut cur = Cursor {
        buf: body,
        pos: SNAPSHOT_MAGIC.len(),
    };
    let version = cur.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: SNAPSHOT_VERSION,
        });
    }
    let dim = cur.u32()? as usize;
    let n = cur.u32()? as usize;
    let grid = Grid::new(dim, n)?;
    let flags = cur.u32()?;
    let step = cur.u64()?;
    let t = cur.f64()?;
    let kappa = cur.f64()?;
    let delta = cur.f64()?;
    let sigma = cur.f64()?;
    let epsilon = cur.f64()?;
    let kind = cur.u32()?;
    let ncoeffs = cur.u32()? as usize;
    let potential = match kind {
        0 => PotentialSpec::double_well(),
        1 => {
            let c = (0..ncoeffs).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            PotentialSpec::polynomial(c)?
        }
        k => return Err(Error::Snapshot(format!("unknown potential tag {k}"))),
    };
    let reg_mode = match cur.u32()? {
        0 => RegMode::Linear,
        1 => RegMode::Variational,
        k => return Err(Error::Snapshot(format!("unknown regularization tag {k}"))),
    };
    let has_trunc = cur.u32()? != 0;
    let level = cur.f64()?;
    let params = ModelParams {
        kappa,
        delta,
        sigma,
        epsilon,
        potential,
        reg_mode,
        truncation: has_trunc.then_some(level),
    };

    let u = cur.velocity(grid)?;
    let phi = cur.field(grid)?;
    let pi = cur.field(grid)?;
    let history = if flags & FLAG_HISTORY != 0 {
        let dt = cur.f64()?;
        let tu = cur.velocity(grid)?;
        let tphi = cur.field(grid)?;
        let tpi = cur.field(grid)?;
        Some(ExplicitHistory {
            tendency: Tendency {
                u: tu,
                phi: tphi,
                pi: tpi,
            },
            dt,
        })
    } else {
        None
    };
    if cur.pos != body.len() {
        return Err(Error::Snapshot("trailing bytes after payload".into()));
    }
    Ok(Snapshot {
        state: SystemState::new(u, phi, pi, t)?,
        params,
        step,
        history,
    })
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    fs::write(path, encode_snapshot(snap))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    decode_snapshot(&fs::read(path)?)
}
