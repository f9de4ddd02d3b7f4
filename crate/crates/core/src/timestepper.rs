//! Time integration.
//!
//! [`Scheme::Cnab2`] treats viscosity and the per-mode linear phase block
//! with Crank–Nicolson and everything else with (variable-step)
//! Adams–Bashforth 2, so each step costs one explicit evaluation and one
//! 2×2 real solve per Fourier mode. [`Scheme::Rk4`] is the classical explicit
//! four-stage method on the full right-hand side; it serves as the reference.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::model::{
    explicit_tendency, full_tendency, phase_block, ModelParams, RegMode, SystemState, Tendency,
};
use crate::spectral::SpectralField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Cnab2,
    Rk4,
}

/// Rule for the first CNAB2 step, before any explicit history exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bootstrap {
    /// Forward Euler on the explicit terms, Crank–Nicolson on the linear ones.
    ForwardEuler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    /// Fixed step, or the ceiling when `adaptive` is set.
    pub dt: f64,
    pub scheme: Scheme,
    pub cfl_safety: f64,
    pub bootstrap: Bootstrap,
    /// Recompute the step from [`stable_dt`] before every step.
    pub adaptive: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            scheme: Scheme::Cnab2,
            cfl_safety: 0.5,
            bootstrap: Bootstrap::ForwardEuler,
            adaptive: false,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid_param("dt", "dt > 0 required"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(invalid_param("cfl_safety", "cfl_safety must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Explicit tendency of the previous step and the step size taken from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitHistory {
    pub tendency: Tendency,
    pub dt: f64,
}

fn check_finite(state: &SystemState) -> Result<()> {
    if state.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { t: state.t })
    }
}

/// Crank–Nicolson on the linear part with a given explicit forcing:
/// `(I - dt/2 L) y⁺ = (I + dt/2 L) y + dt E`.
fn implicit_update(
    state: &SystemState,
    forcing: &Tendency,
    params: &ModelParams,
    dt: f64,
) -> SystemState {
    let grid = state.grid();
    let half = 0.5 * dt;

    let mut u = state.u.clone();
    for (comp, force) in u.components_mut().iter_mut().zip(forcing.u.components()) {
        let f = force.coeffs();
        for (i, c) in comp.coeffs_mut().iter_mut().enumerate() {
            let lam = grid.laplacian_symbol(i);
            *c = (*c * (1.0 + half * lam) + f[i] * dt) / (1.0 - half * lam);
        }
    }

    let mut phi = SpectralField::zeros(grid);
    let mut pi = SpectralField::zeros(grid);
    for i in 0..grid.len() {
        let l = phase_block(params, -grid.laplacian_symbol(i));
        let (p, q) = (state.phi.coeffs()[i], state.pi.coeffs()[i]);
        let r0 = p * (1.0 + half * l[0][0]) + q * (half * l[0][1]) + forcing.phi.coeffs()[i] * dt;
        let r1 = p * (half * l[1][0]) + q * (1.0 + half * l[1][1]) + forcing.pi.coeffs()[i] * dt;
        let a = [
            [1.0 - half * l[0][0], -half * l[0][1]],
            [-half * l[1][0], 1.0 - half * l[1][1]],
        ];
        let (x0, x1) = solve2(a, r0, r1);
        phi.coeffs_mut()[i] = x0;
        pi.coeffs_mut()[i] = x1;
    }

    SystemState {
        u,
        phi,
        pi,
        t: state.t + dt,
    }
}

/// Solve a real 2×2 system with complex right-hand side (Cramer's rule).
fn solve2(a: [[f64; 2]; 2], r0: Complex64, r1: Complex64) -> (Complex64, Complex64) {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let x0 = (r0 * a[1][1] - r1 * a[0][1]) / det;
    let x1 = (r1 * a[0][0] - r0 * a[1][0]) / det;
    (x0, x1)
}

/// First CNAB2 step: forward Euler on the explicit terms. Returns the new
/// state and the history needed by [`cnab2_step`].
pub fn bootstrap_step(
    state: &SystemState,
    params: &ModelParams,
    dt: f64,
) -> Result<(SystemState, ExplicitHistory)> {
    let explicit = explicit_tendency(state, params);
    let next = implicit_update(state, &explicit, params, dt);
    check_finite(&next)?;
    Ok((
        next,
        ExplicitHistory {
            tendency: explicit,
            dt,
        },
    ))
}

/// One CNAB2 step with variable-step AB2 extrapolation
/// `(1 + ω/2) N⁰ - (ω/2) N⁻¹`, `ω = dt / dt_prev`.
pub fn cnab2_step(
    state: &SystemState,
    history: &ExplicitHistory,
    params: &ModelParams,
    dt: f64,
) -> Result<(SystemState, ExplicitHistory)> {
    let current = explicit_tendency(state, params);
    let omega = dt / history.dt;
    let mut forcing = Tendency::zeros(state.grid());
    forcing.axpy(1.0 + 0.5 * omega, &current);
    forcing.axpy(-0.5 * omega, &history.tendency);
    let next = implicit_update(state, &forcing, params, dt);
    check_finite(&next)?;
    Ok((
        next,
        ExplicitHistory {
            tendency: current,
            dt,
        },
    ))
}

fn offset_state(state: &SystemState, k: &Tendency, h: f64) -> SystemState {
    let mut s = state.clone();
    s.u.axpy(h, &k.u);
    s.phi.axpy(h, &k.phi);
    s.pi.axpy(h, &k.pi);
    s.t = state.t + h;
    s
}

/// Classical RK4 step on the full right-hand side.
pub fn rk4_step(state: &SystemState, params: &ModelParams, dt: f64) -> Result<SystemState> {
    let k1 = full_tendency(state, params);
    let k2 = full_tendency(&offset_state(state, &k1, 0.5 * dt), params);
    let k3 = full_tendency(&offset_state(state, &k2, 0.5 * dt), params);
    let k4 = full_tendency(&offset_state(state, &k3, dt), params);
    let mut next = state.clone();
    for (k, w) in [(&k1, 1.0), (&k2, 2.0), (&k3, 2.0), (&k4, 1.0)] {
        next.u.axpy(dt * w / 6.0, &k.u);
        next.phi.axpy(dt * w / 6.0, &k.phi);
        next.pi.axpy(dt * w / 6.0, &k.pi);
    }
    next.t = state.t + dt;
    check_finite(&next)?;
    Ok(next)
}

/// Step-size estimate: the smallest of the advective bound `h / max|u|`, the
/// capillary bound `h / max|∇φ|` and the reaction bound `κ / max|f_n'(φ)|`,
/// scaled by the safety factor and capped at `config.dt`.
pub fn stable_dt(state: &SystemState, params: &ModelParams, config: &StepperConfig) -> f64 {
    stability_limit(state, params)
        .map_or(config.dt, |limit| (config.cfl_safety * limit).min(config.dt))
}

/// Unscaled minimum of the stability bounds, `None` when every bound is
/// infinite (e.g. the zero state).
pub fn stability_limit(state: &SystemState, params: &ModelParams) -> Option<f64> {
    let grid = state.grid();
    let h = grid.spacing();
    let mut bounds = Vec::new();

    let speed = pointwise_magnitude(state.u.components());
    if speed > 0.0 {
        bounds.push(h / speed);
    }
    let slope = pointwise_magnitude(&state.phi.gradient());
    if slope > 0.0 {
        bounds.push(h / slope);
    }
    let nl = params.nonlinearity();
    let stiffness = state.phi.to_padded().map(|v| nl.fprime(v).abs()).max_abs();
    if stiffness > 0.0 {
        bounds.push(params.kappa / stiffness);
        if params.reg_mode == RegMode::Variational && params.epsilon > 0.0 {
            bounds.push(1.0 / (params.epsilon * stiffness));
        }
    }
    bounds.into_iter().reduce(f64::min)
}

fn pointwise_magnitude(components: &[SpectralField]) -> f64 {
    let values: Vec<Vec<f64>> = components.iter().map(|c| c.physical_values()).collect();
    let len = values.first().map_or(0, |v| v.len());
    (0..len)
        .map(|p| values.iter().map(|v| v[p] * v[p]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Stateful driver holding the AB2 history.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: ModelParams,
    config: StepperConfig,
    history: Option<ExplicitHistory>,
}

impl Stepper {
    pub fn new(params: ModelParams, config: StepperConfig) -> Self {
        Self {
            params,
            config,
            history: None,
        }
    }

    /// Resume with a history saved from an earlier run.
    pub fn with_history(mut self, history: Option<ExplicitHistory>) -> Self {
        self.history = history;
        self
    }

    pub fn history(&self) -> Option<&ExplicitHistory> {
        self.history.as_ref()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    /// Step size the next call to [`Stepper::step`] would use.
    pub fn next_dt(&self, state: &SystemState) -> f64 {
        if self.config.adaptive {
            stable_dt(state, &self.params, &self.config)
        } else {
            self.config.dt
        }
    }

    /// Advance by `dt`.
    pub fn step_by(&mut self, state: &SystemState, dt: f64) -> Result<SystemState> {
        match self.config.scheme {
            Scheme::Rk4 => rk4_step(state, &self.params, dt),
            Scheme::Cnab2 => {
                let (next, hist) = match &self.history {
                    None => match self.config.bootstrap {
                        Bootstrap::ForwardEuler => bootstrap_step(state, &self.params, dt)?,
                    },
                    Some(h) => cnab2_step(state, h, &self.params, dt)?,
                };
                self.history = Some(hist);
                Ok(next)
            }
        }
    }

    pub fn step(&mut self, state: &SystemState) -> Result<SystemState> {
        let dt = self.next_dt(state);
        self.step_by(state, dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;

    fn params_no_damping() -> ModelParams {
        ModelParams {
            sigma: 0.0,
            ..ModelParams::default()
        }
    }

    #[test]
    fn equilibrium_is_fixed() {
        let g = Grid::new(2, 16).unwrap();
        let s = SystemState::homogeneous(g, 1.0, 0.0);
        let p = params_no_damping();
        let (a, _) = bootstrap_step(&s, &p, 1e-2).unwrap();
        assert!(a.phi.sub(&s.phi).max_abs_coeff() <= 1e-14);
        assert!(a.pi.max_abs_coeff() <= 1e-14);
        let b = rk4_step(&s, &p, 1e-3).unwrap();
        assert!(b.phi.sub(&s.phi).max_abs_coeff() <= 1e-14);
    }

    #[test]
    fn bootstrap_matches_scalar_euler() {
        let g = Grid::new(2, 8).unwrap();
        let p = ModelParams {
            kappa: 0.5,
            sigma: 0.2,
            ..ModelParams::default()
        };
        let (phi0, pi0) = (0.8, 0.1);
        let dt = 1e-2;
        let (next, _) = bootstrap_step(&SystemState::homogeneous(g, phi0, pi0), &p, dt).unwrap();
        // CN on [[−σ, 1], [0, −1/κ]] with explicit forcing (0, −f/κ)
        let f = p.potential.potential_f(phi0);
        let l = [[-p.sigma, 1.0], [0.0, -1.0 / p.kappa]];
        let a = [
            [1.0 - 0.5 * dt * l[0][0], -0.5 * dt * l[0][1]],
            [0.0, 1.0 - 0.5 * dt * l[1][1]],
        ];
        let r0 = phi0 + 0.5 * dt * (l[0][0] * phi0 + l[0][1] * pi0);
        let r1 = pi0 + 0.5 * dt * l[1][1] * pi0 - dt * f / p.kappa;
        let x1 = r1 / a[1][1];
        let x0 = (r0 - a[0][1] * x1) / a[0][0];
        assert!((next.phi.mean() - x0).abs() < 1e-14);
        assert!((next.pi.mean() - x1).abs() < 1e-14);
    }

    #[test]
    fn stable_dt_examples() {
        let g = Grid::new(2, 16).unwrap();
        let p = ModelParams::default();
        let config = StepperConfig {
            dt: 10.0,
            cfl_safety: 0.5,
            ..StepperConfig::default()
        };
        let s = SystemState::homogeneous(g, 1.0, 0.0);
        // f'(1) = 8
        let expect = 0.5 * p.kappa / 8.0;
        assert!((stable_dt(&s, &p, &config) - expect).abs() < 1e-14);

        let zero = SystemState::homogeneous(g, 0.0, 0.0);
        let mut lin = p.clone();
        lin.potential = crate::model::PotentialSpec::polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(stable_dt(&zero, &lin, &config), config.dt);

        let mut moving = SystemState::homogeneous(g, 0.0, 0.0);
        moving.u = crate::model::taylor_green(g, 1.0);
        let a = stability_limit(&moving, &lin).unwrap();
        moving.u = crate::model::taylor_green(g, 2.0);
        let b = stability_limit(&moving, &lin).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nan_is_reported_with_time() {
        let g = Grid::new(2, 8).unwrap();
        let mut s = SystemState::homogeneous(g, 0.5, 0.0);
        s.phi.coeffs_mut()[0] = Complex64::new(f64::NAN, 0.0);
        s.t = 0.25;
        match rk4_step(&s, &ModelParams::default(), 1e-3) {
            Err(Error::NonFinite { t }) => assert!((t - 0.251).abs() < 1e-12),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(StepperConfig::default().validate().is_ok());
        let bad = StepperConfig {
            dt: 0.0,
            ..StepperConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = StepperConfig {
            cfl_safety: 1.5,
            ..StepperConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
