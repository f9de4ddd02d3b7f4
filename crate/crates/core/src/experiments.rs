//! Experiment harnesses: plain runs, absorbing-set sweeps, continuous
//! dependence, convergence studies and the scalar ODE oracle.
//!
//! Every harness is deterministic for a fixed config and seed; sweeps run
//! their members in parallel and collect results in input order.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics::{difference_sq, energy, mean_diagnostics, norms, EnergyReport};
use crate::error::{invalid_param, Error, Result};
use crate::io::{
    read_snapshot, write_snapshot, ConvergeKind, DiagnosticsWriter, InitialSpec, RunConfig,
    Snapshot,
};
use crate::model::{taylor_green, ModelParams, RegMode, SystemState};
use crate::spectral::{leray_project, Grid, SpectralField, VelocityField};
use crate::timestepper::{ExplicitHistory, Scheme, Stepper, StepperConfig};

/// Outcome of a harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Hypotheses of the tested statement do not hold; findings only.
    Exploratory,
    /// Plain run without a pass criterion.
    Completed,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Exploratory => "exploratory",
            Status::Completed => "completed",
        }
    }
}

/// Named table of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    /// Resolved configuration echo.
    pub config: String,
    pub status: Status,
    pub notes: Vec<String>,
    pub summary: Vec<(String, f64)>,
    pub series: Vec<Series>,
}

impl ExperimentReport {
    fn new(name: &str, config: &RunConfig) -> Self {
        Self {
            name: name.to_string(),
            config: config.to_toml(),
            status: Status::Completed,
            notes: config.warnings.clone(),
            summary: Vec::new(),
            series: Vec::new(),
        }
    }

    fn set(&mut self, key: impl Into<String>, value: f64) {
        self.summary.push((key.into(), value));
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// `key = value` summary text.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment = {}", self.name);
        let _ = writeln!(out, "status = {}", self.status.as_str());
        for n in &self.notes {
            let _ = writeln!(out, "note = {n}");
        }
        for (k, v) in &self.summary {
            let _ = writeln!(out, "{k} = {v:.16e}");
        }
        out
    }

    /// Write `summary.txt`, `config.toml` and one CSV per series.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.txt"), self.summary_text())?;
        fs::write(dir.join("config.toml"), &self.config)?;
        for s in &self.series {
            fs::write(dir.join(format!("{}.csv", s.name)), s.to_csv())?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Initial data
// ---------------------------------------------------------------------------

fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> SpectralField {
    let band = (grid.n() / 8) as i64;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    for i in 0..grid.len() {
        let k = grid.wavenumber(i);
        if k[..grid.dim()].iter().any(|&x| x.abs() > band) {
            continue;
        }
        let j = grid.conjugate_index(i);
        if i == j {
            coeffs[i] = Complex64::new(rng.gen_range(-1.0..=1.0), 0.0);
        } else if i < j {
            let c = Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            coeffs[i] = c;
            coeffs[j] = c.conj();
        }
    }
    SpectralField::from_coeffs(grid, coeffs).expect("length matches grid")
}

fn rescale(f: &mut SpectralField, current: f64, target: f64) {
    if current > 0.0 {
        f.scale(target / current);
    }
}

/// Seeded band-limited random state.
///
/// A `ChaCha8Rng` seeded with `seed_from_u64(seed)` fills, in order, the
/// velocity components, `φ` and `π`. For each field the lattice is walked in
/// flat order; every mode with `|k|_∞ <= n/8` that precedes its conjugate
/// partner draws a real and an imaginary part uniformly from `[-1, 1]` and
/// sets the partner to the conjugate, a self-conjugate mode draws only a real
/// part. The velocity is then Leray-projected and each field rescaled to the
/// requested `‖u‖_H`, `‖φ‖_V` and `‖π‖_H`.
pub fn random_state(grid: Grid, seed: u64, u_norm: f64, phi_norm: f64, pi_norm: f64) -> SystemState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<SpectralField> = (0..grid.dim()).map(|_| random_field(grid, &mut rng)).collect();
    let mut phi = random_field(grid, &mut rng);
    let mut pi = random_field(grid, &mut rng);
    let u = leray_project(&raw).expect("components share a grid");
    let un = u.norm();
    let u = if un > 0.0 { u.scaled(u_norm / un) } else { u };
    let phi_v = (phi.norm_sq() + phi.grad_norm_sq()).sqrt();
    rescale(&mut phi, phi_v, phi_norm);
    let pin = pi.norm();
    rescale(&mut pi, pin, pi_norm);
    SystemState { u, phi, pi, t: 0.0 }
}

/// `Σ_d (P_r(x_d) - 1) / d` with the Poisson kernel `P_r` at `r = 1/2`.
fn poisson_profile(grid: Grid) -> SpectralField {
    let r = 0.5f64;
    let dim = grid.dim();
    SpectralField::from_fn(grid, move |x| {
        let mut s = 0.0;
        for &xd in &x[..dim] {
            let c = (2.0 * std::f64::consts::PI * xd).cos();
            s += 2.0 * (r * c - r * r) / (1.0 - 2.0 * r * c + r * r);
        }
        s / dim as f64
    })
}

/// Initial state, AB2 history and step counter described by the config.
pub fn initial_state(config: &RunConfig) -> Result<(SystemState, Option<ExplicitHistory>, u64)> {
    let grid = config.grid;
    let state = match &config.initial {
        InitialSpec::Random {
            u_norm,
            phi_norm,
            pi_norm,
        } => random_state(grid, config.seed, *u_norm, *phi_norm, *pi_norm),
        InitialSpec::GroundPlus => SystemState::homogeneous(grid, 1.0, 0.0),
        InitialSpec::GroundMinus => SystemState::homogeneous(grid, -1.0, 0.0),
        InitialSpec::Zero => SystemState::homogeneous(grid, 0.0, 0.0),
        InitialSpec::Constant { phi, pi } => SystemState::homogeneous(grid, *phi, *pi),
        InitialSpec::TaylorGreen { amplitude } => SystemState {
            u: taylor_green(grid, *amplitude),
            phi: SpectralField::zeros(grid),
            pi: SpectralField::zeros(grid),
            t: 0.0,
        },
        InitialSpec::Analytic { amplitude } => SystemState {
            u: taylor_green(grid, *amplitude),
            phi: poisson_profile(grid).scaled(*amplitude).band_limited(),
            pi: SpectralField::zeros(grid),
            t: 0.0,
        },
        InitialSpec::Snapshot { path } => {
            let snap = read_snapshot(path)?;
            snap.check_grid(grid)?;
            return Ok((snap.state, snap.history, snap.step));
        }
    };
    Ok((state, None, 0))
}

fn scale_state(s: &SystemState, a: f64) -> SystemState {
    SystemState {
        u: s.u.scaled(a),
        phi: s.phi.scaled(a),
        pi: s.pi.scaled(a),
        t: s.t,
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// Total number of fixed steps of size `dt` covering `[0, t_final]`.
fn fixed_steps(t_final: f64, dt: f64) -> u64 {
    (t_final / dt).round().max(1.0) as u64
}

/// Advance `state` to `t_final`, calling `on_step(step, state, stepper)`
/// after every step. Fixed-step runs take `round(t_final/dt)` steps in
/// total, counting from `start_step`; adaptive runs clip the last step to
/// land on `t_final`.
fn drive(
    state: SystemState,
    history: Option<ExplicitHistory>,
    start_step: u64,
    params: &ModelParams,
    stepper_cfg: &StepperConfig,
    t_final: f64,
    mut on_step: impl FnMut(u64, &SystemState, &Stepper) -> Result<()>,
) -> Result<(SystemState, Stepper, u64)> {
    let mut stepper = Stepper::new(params.clone(), stepper_cfg.clone()).with_history(history);
    let mut s = state;
    let mut step = start_step;
    if stepper_cfg.adaptive {
        let eps = 1e-12 * t_final.max(1.0);
        while s.t < t_final - eps {
            let dt = stepper.next_dt(&s).min(t_final - s.t);
            s = stepper.step_by(&s, dt)?;
            step += 1;
            on_step(step, &s, &stepper)?;
        }
    } else {
        let total = fixed_steps(t_final, stepper_cfg.dt);
        while step < total {
            s = stepper.step_by(&s, stepper_cfg.dt)?;
            step += 1;
            on_step(step, &s, &stepper)?;
        }
    }
    Ok((s, stepper, step))
}

/// Result of [`run_simulation`].
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub report: ExperimentReport,
    /// Energy reports at the output cadence, starting with the initial state.
    pub energies: Vec<EnergyReport>,
    pub final_state: SystemState,
    pub final_history: Option<ExplicitHistory>,
    pub steps: u64,
}

fn with_residual(mut r: EnergyReport, prev: Option<&EnergyReport>) -> EnergyReport {
    if let Some(p) = prev {
        let h = r.t - p.t;
        if h > 0.0 {
            r.residual = Some((r.total - p.total) / h + 0.5 * (p.dissipation() + r.dissipation()));
        }
    }
    r
}

/// Integrate the configured run. With an output directory, writes
/// `diagnostics.csv`, `config.toml`, `summary.txt` and snapshots
/// `snapshot_<step>.bin` at the snapshot cadence.
pub fn run_simulation(config: &RunConfig, out_dir: Option<&Path>) -> Result<SimulationOutput> {
    let (state, history, start_step) = initial_state(config)?;
    let params = &config.params;
    let mut writer = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let f = fs::File::create(dir.join("diagnostics.csv"))?;
            Some(DiagnosticsWriter::new(BufWriter::new(f)))
        }
        None => None,
    };
    let mut energies = vec![energy(&state, params)];
    if let Some(w) = writer.as_mut() {
        w.write(&energies[0])?;
    }
    let (final_state, stepper, steps) = drive(
        state,
        history,
        start_step,
        params,
        &config.stepper,
        config.t_final,
        |step, s, stepper| {
            if step % config.output_every as u64 == 0 {
                let r = with_residual(energy(s, params), energies.last());
                if let Some(w) = writer.as_mut() {
                    w.write(&r)?;
                }
                energies.push(r);
            }
            if let (Some(dir), Some(every)) = (out_dir, config.snapshot_every) {
                if step % every as u64 == 0 {
                    let snap = Snapshot {
                        state: s.clone(),
                        params: params.clone(),
                        step,
                        history: stepper.history().cloned(),
                    };
                    write_snapshot(&dir.join(format!("snapshot_{step:08}.bin")), &snap)?;
                }
            }
            Ok(())
        },
    )?;
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }

    let mut report = ExperimentReport::new("run", config);
    let first = &energies[0];
    let last = energies.last().expect("initial report present");
    report.set("steps", steps as f64);
    report.set("t_final", final_state.t);
    report.set("energy_initial", first.total);
    report.set("energy_final", last.total);
    let max_res = energies
        .iter()
        .filter_map(|r| r.residual)
        .fold(0.0f64, |a, r| a.max(r.abs()));
    report.set("max_energy_residual", max_res);
    let mut series = Series::new("energy", &["t", "total", "D0", "Dreg", "residual"]);
    for r in &energies {
        series.rows.push(vec![
            r.t,
            r.total,
            r.d0,
            r.dreg,
            r.residual.unwrap_or(f64::NAN),
        ]);
    }
    report.series.push(series);
    if let Some(dir) = out_dir {
        report.write_to(dir)?;
    }
    Ok(SimulationOutput {
        report,
        energies,
        final_state,
        final_history: stepper.history().cloned(),
        steps,
    })
}

// ---------------------------------------------------------------------------
// Absorbing-set sweep
// ---------------------------------------------------------------------------

struct SweepRun {
    samples: Vec<(f64, f64)>,
    failure: Option<String>,
}

/// Whether the absorbing-set hypotheses hold: `σ > 0` (linear mode) or
/// `δ = κ`.
pub fn dissipative_regime(params: &ModelParams) -> bool {
    (params.reg_mode == RegMode::Linear && params.sigma > 0.0) || params.delta == params.kappa
}

/// Run the configured initial data scaled by each of `config.sweep.scales`
/// (adaptive steps, in parallel) and compare the final-window suprema of the
/// norm bundle `‖u‖_H + ‖φ‖_V + ‖φ‖_{L^{p+2}} + ‖π‖_H`.
pub fn dissipativity_sweep(config: &RunConfig) -> Result<ExperimentReport> {
    let (base, _, _) = initial_state(config)?;
    let params = &config.params;
    let stepper_cfg = StepperConfig {
        adaptive: true,
        ..config.stepper.clone()
    };
    let t_final = config.t_final;
    let runs: Vec<SweepRun> = config
        .sweep
        .scales
        .par_iter()
        .map(|&a| {
            let s0 = scale_state(&base, a);
            let mut samples = vec![(0.0, norms(&s0, params).bundle())];
            let out = drive(s0, None, 0, params, &stepper_cfg, t_final, |step, s, _| {
                if step % config.output_every as u64 == 0 {
                    samples.push((s.t, norms(s, params).bundle()));
                }
                Ok(())
            });
            let failure = match out {
                Ok((s, _, _)) => {
                    if samples.last().map(|p| p.0) != Some(s.t) {
                        samples.push((s.t, norms(&s, params).bundle()));
                    }
                    None
                }
                Err(e) => Some(format!("scale {a}: {e}")),
            };
            SweepRun { samples, failure }
        })
        .collect();

    let mut report = ExperimentReport::new("dissipativity_sweep", config);
    let regime = dissipative_regime(params);
    if !regime {
        report
            .notes
            .push("exploratory: neither sigma > 0 nor delta = kappa; only exponential-in-time control is expected".into());
    }
    let window_start = (1.0 - config.sweep.window) * t_final;
    let mut sups = Vec::new();
    let mut failed = false;
    for (a, run) in config.sweep.scales.iter().zip(&runs) {
        if let Some(f) = &run.failure {
            report.notes.push(format!("blow-up: {f}"));
            failed = true;
            continue;
        }
        let sup = run
            .samples
            .iter()
            .filter(|(t, _)| *t >= window_start)
            .map(|(_, b)| *b)
            .fold(f64::NEG_INFINITY, f64::max);
        report.set(format!("window_sup[{a}]"), sup);
        sups.push(sup);
    }
    let c0 = sups.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let low = sups.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if c0 > 0.0 { (c0 - low) / c0 } else { 0.0 };
    if !failed {
        report.set("C0_hat", c0);
        report.set("spread", spread);
        for (a, run) in config.sweep.scales.iter().zip(&runs) {
            let bound = 1.05 * c0;
            let mut entry = 0.0;
            for (t, b) in &run.samples {
                if *b > bound {
                    entry = f64::NAN;
                } else if entry.is_nan() {
                    entry = *t;
                }
            }
            report.set(format!("T0_hat[{a}]"), entry);
        }
    }
    let mut series = Series::new("bundle", &["scale", "t", "bundle"]);
    for (a, run) in config.sweep.scales.iter().zip(&runs) {
        for (t, b) in &run.samples {
            series.rows.push(vec![*a, *t, *b]);
        }
    }
    report.series.push(series);
    report.status = if failed {
        Status::Fail
    } else if !regime {
        Status::Exploratory
    } else if spread <= config.sweep.tolerance {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

// ---------------------------------------------------------------------------
// Continuous dependence
// ---------------------------------------------------------------------------

/// Perturbation direction with unit `‖·‖_H`, `‖·‖_V`, `‖·‖_H` parts scaled so
/// that the combined size `(‖δu‖² + ‖δφ‖²_V + ‖δπ‖²)^{1/2}` equals `size`.
fn perturbed(base: &SystemState, seed: u64, size: f64) -> SystemState {
    let part = size / 3f64.sqrt();
    let d = random_state(base.grid(), seed.wrapping_add(1), part, part, part);
    let mut u = base.u.clone();
    u.axpy(1.0, &d.u);
    let mut phi = base.phi.clone();
    phi.axpy(1.0, &d.phi);
    let mut pi = base.pi.clone();
    pi.axpy(1.0, &d.pi);
    SystemState { u, phi, pi, t: base.t }
}

/// Fixed-step trajectory sampled at the output cadence.
fn trajectory(
    state: SystemState,
    params: &ModelParams,
    stepper_cfg: &StepperConfig,
    t_final: f64,
    every: usize,
) -> Result<Vec<SystemState>> {
    let mut out = vec![state.clone()];
    drive(state, None, 0, params, stepper_cfg, t_final, |step, s, _| {
        if step % every as u64 == 0 {
            out.push(s.clone());
        }
        Ok(())
    })?;
    Ok(out)
}

/// Two fixed-step runs from the same initial data; true when every sampled
/// state agrees bit for bit.
pub fn zero_perturbation_identical(config: &RunConfig) -> Result<bool> {
    let (base, _, _) = initial_state(config)?;
    let cfg = StepperConfig {
        adaptive: false,
        ..config.stepper.clone()
    };
    let (a, b) = rayon::join(
        || trajectory(base.clone(), &config.params, &cfg, config.t_final, config.output_every),
        || trajectory(base.clone(), &config.params, &cfg, config.t_final, config.output_every),
    );
    let (a, b) = (a?, b?);
    Ok(a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| bitwise_equal(x, y)))
}

/// Bitwise equality of every coefficient and the time.
pub fn bitwise_equal(a: &SystemState, b: &SystemState) -> bool {
    let fields = |s: &SystemState| {
        let mut v: Vec<SpectralField> = s.u.components().to_vec();
        v.push(s.phi.clone());
        v.push(s.pi.clone());
        v
    };
    a.t.to_bits() == b.t.to_bits()
        && fields(a).iter().zip(fields(b).iter()).all(|(x, y)| {
            x.coeffs().iter().zip(y.coeffs()).all(|(p, q)| {
                p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits()
            })
        })
}

/// Estimate `C(T) = sup_t D(t)/D(0)` with `D = ‖δu‖²_H + ‖δφ‖²_V + ‖δπ‖²_H`
/// for perturbations of size `p` and `p/2`. Passes when the two estimates,
/// and the normalized curves `D(t)/D(0)` at every sample, agree within the
/// tolerance (linear response).
pub fn contraction_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    let p = config.contract.perturbation;
    if p == 0.0 {
        return Err(Error::ZeroPerturbation);
    }
    let (base, _, _) = initial_state(config)?;
    let params = &config.params;
    let cfg = StepperConfig {
        adaptive: false,
        ..config.stepper.clone()
    };
    let every = config.output_every;
    let starts = [
        base.clone(),
        perturbed(&base, config.seed, p),
        perturbed(&base, config.seed, 0.5 * p),
    ];
    let runs: Vec<Result<Vec<SystemState>>> = starts
        .into_par_iter()
        .map(|s| trajectory(s, params, &cfg, config.t_final, every))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut report = ExperimentReport::new("contraction", config);
    if params.delta > 0.0 {
        report
            .notes
            .push("conditional: delta > 0 needs extra regularity of pi for uniqueness".into());
    }
    let mut series = Series::new("difference", &["t", "ratio_full", "ratio_half"]);
    let mut c = [0.0f64; 2];
    let mut curve_gap = 0.0f64;
    let mut monotone = true;
    let d0 = [difference_sq(&runs[1][0], &runs[0][0]), difference_sq(&runs[2][0], &runs[0][0])];
    let mut prev = f64::INFINITY;
    let mut last = [1.0f64; 2];
    for i in 0..runs[0].len() {
        let r1 = difference_sq(&runs[1][i], &runs[0][i]) / d0[0];
        let r2 = difference_sq(&runs[2][i], &runs[0][i]) / d0[1];
        c[0] = c[0].max(r1);
        c[1] = c[1].max(r2);
        curve_gap = curve_gap.max((r1 - r2).abs() / r1.max(r2));
        if r1 > prev * (1.0 + 1e-9) {
            monotone = false;
        }
        prev = r1;
        last = [r1, r2];
        series.rows.push(vec![runs[0][i].t, r1, r2]);
    }
    let rel = (c[0] - c[1]).abs() / c[0].max(c[1]);
    report.set("perturbation", p);
    report.set("C_T_full", c[0]);
    report.set("C_T_half", c[1]);
    report.set("relative_difference", rel);
    report.set("final_ratio_full", last[0]);
    report.set("final_ratio_half", last[1]);
    report.set("max_curve_gap", curve_gap);
    report.set("monotone_decay", if monotone { 1.0 } else { 0.0 });
    report.series.push(series);
    report.status = if rel.max(curve_gap) <= config.contract.tolerance {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

// ---------------------------------------------------------------------------
// Convergence
// ---------------------------------------------------------------------------

/// Copy the coefficients of `f` onto `target`, dropping modes that do not
/// fit and Nyquist modes of the source.
pub fn resample(f: &SpectralField, target: Grid) -> SpectralField {
    let src = f.grid();
    let mut out = SpectralField::zeros(target);
    for i in 0..src.len() {
        if src.is_nyquist(i) {
            continue;
        }
        if let Some(j) = target.index_of(src.wavenumber(i)) {
            if !target.is_nyquist(j) {
                out.coeffs_mut()[j] = f.coeffs()[i];
            }
        }
    }
    out
}

fn resample_state(s: &SystemState, target: Grid) -> Result<SystemState> {
    let comps = s.u.components().iter().map(|c| resample(c, target)).collect();
    SystemState::new(
        VelocityField::new(comps)?,
        resample(&s.phi, target),
        resample(&s.pi, target),
        s.t,
    )
}

/// `‖a - b‖` over all fields, with `b` on a grid at least as fine as `a`'s.
fn cross_grid_distance(coarse: &SystemState, fine: &SystemState) -> f64 {
    let lifted = resample_state(coarse, fine.grid()).expect("lifting keeps invariants");
    let mut sq = lifted.u.sub(&fine.u).norm_sq();
    sq += lifted.phi.sub(&fine.phi).norm_sq();
    sq += lifted.pi.sub(&fine.pi).norm_sq();
    sq.sqrt()
}

fn state_distance(a: &SystemState, b: &SystemState) -> f64 {
    (a.u.sub(&b.u).norm_sq() + a.phi.sub(&b.phi).norm_sq() + a.pi.sub(&b.pi).norm_sq()).sqrt()
}

fn max_coeff_distance(a: &SystemState, b: &SystemState) -> f64 {
    let mut fa: Vec<&SpectralField> = a.u.components().iter().collect();
    fa.push(&a.phi);
    fa.push(&a.pi);
    let mut fb: Vec<&SpectralField> = b.u.components().iter().collect();
    fb.push(&b.phi);
    fb.push(&b.pi);
    fa.iter()
        .zip(&fb)
        .flat_map(|(x, y)| x.coeffs().iter().zip(y.coeffs()).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max)
}

fn final_state(
    state: SystemState,
    params: &ModelParams,
    cfg: &StepperConfig,
    t_final: f64,
) -> Result<SystemState> {
    Ok(drive(state, None, 0, params, cfg, t_final, |_, _, _| Ok(()))?.0)
}

fn orders(errors: &[f64], steps: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .zip(steps.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Temporal, spatial or truncation study selected by `config.converge.kind`.
pub fn convergence_study(config: &RunConfig) -> Result<ExperimentReport> {
    match config.converge.kind {
        ConvergeKind::Temporal => temporal_study(config),
        ConvergeKind::Spatial => spatial_study(config),
        ConvergeKind::Truncation => truncation_study(config),
    }
}

fn temporal_study(config: &RunConfig) -> Result<ExperimentReport> {
    let dts = &config.converge.dts;
    if dts.len() < 3 {
        return Err(Error::InsufficientLevels {
            needed: 3,
            got: dts.len(),
        });
    }
    let (s0, _, _) = initial_state(config)?;
    let params = &config.params;
    let dt_ref = dts.iter().copied().fold(f64::INFINITY, f64::min)
        / config.converge.reference_factor as f64;
    let ref_cfg = StepperConfig {
        dt: dt_ref,
        scheme: Scheme::Rk4,
        adaptive: false,
        ..config.stepper.clone()
    };
    let mut jobs: Vec<StepperConfig> = dts
        .iter()
        .map(|&dt| StepperConfig {
            dt,
            adaptive: false,
            ..config.stepper.clone()
        })
        .collect();
    jobs.push(ref_cfg);
    let finals = jobs
        .par_iter()
        .map(|cfg| final_state(s0.clone(), params, cfg, config.t_final))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let reference = finals.last().expect("reference run present");
    let errors: Vec<f64> = finals[..dts.len()]
        .iter()
        .map(|s| state_distance(s, reference))
        .collect();
    let ords = orders(&errors, dts);

    let mut report = ExperimentReport::new("convergence_temporal", config);
    let mut series = Series::new("temporal", &["dt", "error"]);
    for (dt, e) in dts.iter().zip(&errors) {
        series.rows.push(vec![*dt, *e]);
    }
    report.series.push(series);
    report.set("reference_dt", dt_ref);
    for (i, o) in ords.iter().enumerate() {
        report.set(format!("order[{i}]"), *o);
    }
    let (lo, hi) = match config.stepper.scheme {
        Scheme::Cnab2 => (1.8, 2.2),
        Scheme::Rk4 => (3.7, 4.3),
    };
    report.status = if ords.iter().all(|o| (lo..=hi).contains(o)) {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

fn spatial_study(config: &RunConfig) -> Result<ExperimentReport> {
    let res = &config.converge.resolutions;
    if res.len() < 3 {
        return Err(Error::InsufficientLevels {
            needed: 3,
            got: res.len(),
        });
    }
    let grids = res
        .iter()
        .map(|&n| Grid::new(config.grid.dim(), n))
        .collect::<Result<Vec<_>>>()?;
    if grids.windows(2).any(|w| w[1].n() <= w[0].n()) {
        return Err(invalid_param("converge.resolutions", "must increase strictly"));
    }
    let coarse_cfg = RunConfig {
        grid: grids[0],
        ..config.clone()
    };
    let (coarse0, _, _) = initial_state(&coarse_cfg)?;
    let params = &config.params;
    let cfg = StepperConfig {
        adaptive: false,
        ..config.stepper.clone()
    };
    let finals = grids
        .par_iter()
        .map(|&g| {
            let s = resample_state(&coarse0, g)?;
            final_state(s, params, &cfg, config.t_final)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = finals
        .windows(2)
        .map(|w| cross_grid_distance(&w[0], &w[1]))
        .collect();
    let ratios: Vec<f64> = diffs.windows(2).map(|d| d[0] / d[1]).collect();

    let mut report = ExperimentReport::new("convergence_spatial", config);
    let mut series = Series::new("spatial", &["n_coarse", "n_fine", "difference"]);
    for (w, d) in res.windows(2).zip(&diffs) {
        series.rows.push(vec![w[0] as f64, w[1] as f64, *d]);
    }
    report.series.push(series);
    for (i, r) in ratios.iter().enumerate() {
        report.set(format!("ratio[{i}]"), *r);
    }
    report.status = if ratios.iter().all(|&r| r > 10.0) {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

fn max_abs_phi(s: &SystemState) -> f64 {
    s.phi.to_padded().max_abs()
}

fn truncation_study(config: &RunConfig) -> Result<ExperimentReport> {
    let levels = &config.converge.levels;
    if levels.is_empty() {
        return Err(Error::InsufficientLevels { needed: 1, got: 0 });
    }
    let (s0, _, _) = initial_state(config)?;
    let cfg = StepperConfig {
        adaptive: false,
        ..config.stepper.clone()
    };
    let mut variants: Vec<Option<f64>> = levels.iter().map(|&l| Some(l)).collect();
    variants.push(None);
    let runs = variants
        .par_iter()
        .map(|&level| {
            let params = ModelParams {
                truncation: level,
                ..config.params.clone()
            };
            let mut peak = max_abs_phi(&s0);
            let (s, _, _) = drive(s0.clone(), None, 0, &params, &cfg, config.t_final, |_, s, _| {
                peak = peak.max(max_abs_phi(s));
                Ok(())
            })?;
            Ok((s, peak))
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (exact, peak) = runs.last().expect("untruncated run present");

    let mut report = ExperimentReport::new("convergence_truncation", config);
    report.set("max_abs_phi", *peak);
    let mut worst = 0.0f64;
    let mut series = Series::new("truncation", &["level", "max_coeff_difference"]);
    for (l, (s, _)) in levels.iter().zip(&runs) {
        let d = max_coeff_distance(s, exact);
        worst = worst.max(d);
        series.rows.push(vec![*l, d]);
        report.set(format!("difference[{l}]"), d);
    }
    report.series.push(series);
    let min_level = levels.iter().copied().fold(f64::INFINITY, f64::min);
    if *peak >= min_level {
        report.notes.push(format!(
            "max |phi| = {peak} reaches the smallest truncation level {min_level}; agreement is not expected"
        ));
    }
    report.status = if *peak < min_level && worst <= 1e-10 {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

// ---------------------------------------------------------------------------
// Scalar oracle
// ---------------------------------------------------------------------------

/// RK4 integration of the spatially constant reduction
/// `φ' = π - σφ` (variational mode: `φ' = π - ε f_n(φ)`),
/// `κπ' = -(π + f_n(φ))`. Returns `(t, φ, π)` after every step, starting
/// with the initial point.
pub fn homogeneous_ode_oracle(
    params: &ModelParams,
    phi0: f64,
    pi0: f64,
    t_final: f64,
    dt: f64,
) -> Result<Vec<(f64, f64, f64)>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid_param("dt", "dt > 0 required"));
    }
    let nl = params.nonlinearity();
    let rhs = |phi: f64, pi: f64| -> (f64, f64) {
        let f = nl.f(phi);
        let dphi = match params.reg_mode {
            RegMode::Linear => pi - params.sigma * phi,
            RegMode::Variational => pi - params.epsilon * f,
        };
        (dphi, -(pi + f) / params.kappa)
    };
    let steps = fixed_steps(t_final, dt);
    let mut out = Vec::with_capacity(steps as usize + 1);
    let (mut phi, mut pi, mut t) = (phi0, pi0, 0.0);
    out.push((t, phi, pi));
    for _ in 0..steps {
        let k1 = rhs(phi, pi);
        let k2 = rhs(phi + 0.5 * dt * k1.0, pi + 0.5 * dt * k1.1);
        let k3 = rhs(phi + 0.5 * dt * k2.0, pi + 0.5 * dt * k2.1);
        let k4 = rhs(phi + dt * k3.0, pi + dt * k3.1);
        phi += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        pi += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        t += dt;
        out.push((t, phi, pi));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Invariant suite
// ---------------------------------------------------------------------------

/// One property of [`verify_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, tol: f64) -> PropertyCheck {
    PropertyCheck {
        name,
        passed: value.is_finite() && value <= tol,
        detail: format!("{value:.3e} <= {tol:.1e}"),
    }
}

/// Fast invariant checks on the given grid: spectral exactness, Leray
/// projection, conservation of the velocity mean, mean-value ODEs,
/// equilibria, the homogeneous reduction, the energy law, truncation
/// identity and snapshot round trip.
pub fn verify_suite(grid: Grid) -> Result<Vec<PropertyCheck>> {
    use std::f64::consts::PI;
    let mut out = Vec::new();
    let params = ModelParams {
        kappa: 0.5,
        sigma: 0.5,
        ..ModelParams::default()
    };

    let sine = SpectralField::from_fn(grid, |x| (2.0 * PI * x[0]).sin());
    let expected = SpectralField::from_fn(grid, |x| -4.0 * PI * PI * (2.0 * PI * x[0]).sin());
    let lap_err = sine.laplacian().sub(&expected).max_abs_coeff();
    out.push(check("laplacian of a sine is exact", lap_err, 1e-10));

    let random = random_state(grid, 7, 0.2, 0.5, 0.2);
    out.push(check(
        "leray projection is divergence-free",
        random.u.divergence_defect(),
        1e-12,
    ));

    let mut stepper = Stepper::new(params.clone(), StepperConfig::default());
    let mut s = random.clone();
    let mut u_mean = 0.0f64;
    for _ in 0..200 {
        s = stepper.step(&s)?;
        for c in s.u.components() {
            u_mean = u_mean.max(c.coeffs()[0].norm());
        }
    }
    out.push(check("velocity mean stays zero", u_mean, 0.0));

    let m = mean_diagnostics(&s, &params);
    out.push(check("phi mean-value ODE", m.phi_residual.abs(), 1e-10));
    out.push(check("pi mean-value ODE", m.pi_residual.abs(), 1e-10));
    out.push(check("combined mean-value ODE", m.combined_residual.abs(), 1e-10));

    let eq_params = ModelParams {
        sigma: 0.0,
        ..params.clone()
    };
    let mut drift = 0.0f64;
    for phi in [1.0, -1.0] {
        let mut st = Stepper::new(eq_params.clone(), StepperConfig::default());
        let mut s = SystemState::homogeneous(grid, phi, 0.0);
        for _ in 0..100 {
            let next = st.step(&s)?;
            drift = drift.max(max_coeff_distance(&next, &s));
            s = next;
        }
    }
    out.push(check("pure phases are fixed points", drift, 1e-13));

    let dt = 1e-4;
    let oracle = homogeneous_ode_oracle(&eq_params, 1.2, 0.0, 0.2, dt)?;
    let rk = StepperConfig {
        dt,
        scheme: Scheme::Rk4,
        ..StepperConfig::default()
    };
    let end = final_state(SystemState::homogeneous(grid, 1.2, 0.0), &eq_params, &rk, 0.2)?;
    let (_, phi_o, pi_o) = *oracle.last().expect("oracle trajectory non-empty");
    let dev = (end.phi.mean() - phi_o).abs().max((end.pi.mean() - pi_o).abs());
    out.push(check("constant data follow the scalar ODE", dev, 1e-8));

    // Lowest modes only: the residual's trapezoid average carries O(dt² D'').
    let smooth = SystemState::new(
        taylor_green(grid, 0.02),
        SpectralField::from_fn(grid, |x| 0.2 * (2.0 * PI * x[0]).cos()),
        SpectralField::from_fn(grid, |x| 0.05 * (2.0 * PI * x[1]).sin()),
        0.0,
    )?;
    let mut reports = vec![energy(&smooth, &params)];
    let mut st = Stepper::new(params.clone(), rk.clone());
    let mut s = smooth.clone();
    for _ in 0..200 {
        s = st.step(&s)?;
        reports.push(energy(&s, &params));
    }
    let res = crate::diagnostics::energy_law_residual(&reports)?;
    out.push(check("RK4 energy-law residual", res.max, 1e-6));

    let cnab = StepperConfig {
        dt: 2e-3,
        ..StepperConfig::default()
    };
    let mut peak = 0.0f64;
    let mut last: Option<SystemState> = None;
    for level in [Some(2.0), None] {
        let p = ModelParams {
            truncation: level,
            ..params.clone()
        };
        let (e, _, _) = drive(smooth.clone(), None, 0, &p, &cnab, 0.1, |_, s, _| {
            peak = peak.max(max_abs_phi(s));
            Ok(())
        })?;
        if let Some(prev) = &last {
            let d = max_coeff_distance(prev, &e);
            out.push(check("truncated nonlinearity is inert below the level", d, 1e-10));
        }
        last = Some(e);
    }
    out.push(check("order parameter stays below the truncation level", peak, 2.0));

    let snap = Snapshot {
        state: s.clone(),
        params: params.clone(),
        step: 200,
        history: None,
    };
    let back = crate::io::decode_snapshot(&crate::io::encode_snapshot(&snap))?;
    out.push(PropertyCheck {
        name: "snapshot round trip is bitwise",
        passed: bitwise_equal(&back.state, &snap.state) && back.params == snap.params,
        detail: String::new(),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_state_hits_targets() {
        let grid = Grid::new(2, 16).unwrap();
        let s = random_state(grid, 3, 0.2, 0.5, 0.1);
        assert!((s.u.norm() - 0.2).abs() < 1e-14);
        assert!(((s.phi.norm_sq() + s.phi.grad_norm_sq()).sqrt() - 0.5).abs() < 1e-14);
        assert!((s.pi.norm() - 0.1).abs() < 1e-14);
        assert!(s.u.divergence_defect() < 1e-14);
        assert_eq!(s, random_state(grid, 3, 0.2, 0.5, 0.1));
        assert_ne!(s, random_state(grid, 4, 0.2, 0.5, 0.1));
        for i in 0..grid.len() {
            let k = grid.wavenumber(i);
            if k[0].abs() > 2 || k[1].abs() > 2 {
                assert_eq!(s.phi.coeffs()[i], Complex64::new(0.0, 0.0));
            }
        }
        s.phi.to_physical().unwrap();
    }

    #[test]
    fn oracle_fixed_points() {
        let p = ModelParams {
            sigma: 0.0,
            ..ModelParams::default()
        };
        for (phi, pi) in [(1.0, 0.0), (0.0, 0.0), (-1.0, 0.0)] {
            let tr = homogeneous_ode_oracle(&p, phi, pi, 1.0, 0.01).unwrap();
            assert_eq!(tr.len(), 101);
            assert!(tr.iter().all(|&(_, a, b)| a == phi && b == pi));
        }
    }

    #[test]
    fn oracle_settles_in_the_well() {
        let p = ModelParams {
            kappa: 0.5,
            sigma: 0.0,
            ..ModelParams::default()
        };
        let tr = homogeneous_ode_oracle(&p, 1.2, 0.0, 40.0, 1e-3).unwrap();
        let (_, phi, pi) = *tr.last().unwrap();
        assert!((phi - 1.0).abs() < 1e-6 && pi.abs() < 1e-6);
        let crossings = tr.windows(2).filter(|w| (w[0].1 - 1.0) * (w[1].1 - 1.0) < 0.0).count();
        assert!(crossings >= 2);
    }

    #[test]
    fn resample_round_trip() {
        let g16 = Grid::new(2, 16).unwrap();
        let g32 = Grid::new(2, 32).unwrap();
        let s = random_state(g16, 1, 0.3, 0.3, 0.3);
        let up = resample_state(&s, g32).unwrap();
        let down = resample_state(&up, g16).unwrap();
        assert_eq!(down, s);
        assert!(cross_grid_distance(&s, &up) == 0.0);
    }

    #[test]
    fn zero_perturbation_is_an_error() {
        let mut c = RunConfig::new(Grid::new(2, 8).unwrap(), 0.01);
        c.contract.perturbation = 0.0;
        assert!(matches!(contraction_experiment(&c), Err(Error::ZeroPerturbation)));
    }

    #[test]
    fn insufficient_levels() {
        let mut c = RunConfig::new(Grid::new(2, 8).unwrap(), 0.01);
        c.converge.dts = vec![1e-3, 5e-4];
        assert!(matches!(
            convergence_study(&c),
            Err(Error::InsufficientLevels { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn ground_state_run_is_constant() {
        let mut c = RunConfig::new(Grid::new(2, 8).unwrap(), 0.05);
        c.initial = InitialSpec::GroundPlus;
        c.params.sigma = 0.0;
        c.output_every = 5;
        let out = run_simulation(&c, None).unwrap();
        assert_eq!(out.energies.len(), 11);
        for r in &out.energies {
            assert_eq!(r.total, 0.0);
            assert_eq!(r.dissipation(), 0.0);
        }
    }
}
