//! Energy, dissipation and norm diagnostics on a single state.
//!
//! L² quantities use Parseval on the coefficients; integrals of nonlinear
//! functions of `φ` use the 3/2 padded-grid quadrature, the same collocation
//! that defines the projected nonlinearity in the solver.

use crate::error::{invalid_param, Error, Result};
use crate::model::{
    convect, full_tendency, projected_nonlinearity, ModelParams, RegMode, SystemState,
};

/// Spatial means and the integral of the nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct Means {
    pub u: Vec<f64>,
    pub phi: f64,
    pub pi: f64,
    pub f_integral: f64,
}

/// Every energy-type functional evaluated at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub t: f64,
    /// `½‖u‖²`
    pub kinetic_macro: f64,
    /// `(κ/2)‖π‖²`
    pub kinetic_micro: f64,
    /// `½‖∇φ‖²`
    pub interface: f64,
    /// `∫F_n(φ)`
    pub configuration: f64,
    pub total: f64,
    /// `‖∇u‖² + ‖π‖²`
    pub d0: f64,
    /// Regularization dissipation for the configured mode.
    pub dreg: f64,
    /// `‖u‖² + κ‖π‖² + ‖∇φ‖² + 2∫F(φ) + C`
    pub g: f64,
    /// `G + ηκ(π, φ)` at the default η; `None` when no admissible η exists.
    pub d_cross: Option<f64>,
    pub means: Means,
    /// `|(Π f_n(φ), Π(u·∇φ))|`, zero for the continuous problem.
    pub galerkin_crossterm: f64,
    /// Energy-law residual over the interval ending at `t`, when known.
    pub residual: Option<f64>,
}

impl EnergyReport {
    /// Total dissipation rate `D0 + Dreg`.
    pub fn dissipation(&self) -> f64 {
        self.d0 + self.dreg
    }
}

/// Evaluate the energy report of a state.
pub fn energy(state: &SystemState, params: &ModelParams) -> EnergyReport {
    let nl = params.nonlinearity();
    let phi_pad = state.phi.to_padded();

    let kinetic_macro = 0.5 * state.u.norm_sq();
    let kinetic_micro = 0.5 * params.kappa * state.pi.norm_sq();
    let grad_sq = state.phi.grad_norm_sq();
    let interface = 0.5 * grad_sq;
    let configuration = phi_pad.map(|v| nl.antiderivative(v)).quadrature();
    let total = kinetic_macro + kinetic_micro + interface + configuration;

    let pi_sq = state.pi.norm_sq();
    let d0 = state.u.grad_norm_sq() + pi_sq;

    let fphi = projected_nonlinearity(&state.phi, params);
    let dreg = match params.reg_mode {
        RegMode::Linear => {
            let lap_sq = state.phi.laplacian().norm_sq();
            let mut grad_pad_sq = crate::spectral::PaddedField::zeros(state.grid());
            for d in state.phi.gradient() {
                let p = d.to_padded();
                grad_pad_sq.add_product(&p, &p);
            }
            let weighted = phi_pad
                .map(|v| params.sigma + params.epsilon * nl.fprime(v))
                .mul(&grad_pad_sq)
                .quadrature();
            let f_phi = phi_pad.map(|v| nl.f(v) * v).quadrature();
            params.epsilon * lap_sq + weighted + params.sigma * f_phi
        }
        RegMode::Variational => {
            let mut chem = state.phi.laplacian();
            chem.scale(-1.0);
            chem.axpy(1.0, &fphi);
            params.epsilon * chem.norm_sq()
        }
    };

    let g = g_functional(state, params, grad_sq, 2.0 * configuration);
    let d_cross = default_eta(params).map(|eta| g + eta * params.kappa * state.pi.inner(&state.phi));

    let means = Means {
        u: state.u.components().iter().map(|c| c.mean()).collect(),
        phi: state.phi.mean(),
        pi: state.pi.mean(),
        f_integral: fphi.mean(),
    };
    let galerkin_crossterm = fphi.inner(&convect(&state.u, &state.phi)).abs();

    EnergyReport {
        t: state.t,
        kinetic_macro,
        kinetic_micro,
        interface,
        configuration,
        total,
        d0,
        dreg,
        g,
        d_cross,
        means,
        galerkin_crossterm,
        residual: None,
    }
}

fn g_functional(state: &SystemState, params: &ModelParams, grad_sq: f64, two_f: f64) -> f64 {
    state.u.norm_sq()
        + params.kappa * state.pi.norm_sq()
        + grad_sq
        + two_f
        + params.potential.offset()
}

/// Discrete energy-law residual series.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    /// End time of each interval.
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    /// `max |r|`.
    pub max: f64,
}

/// `r = (E(t+dt) - E(t))/dt + (D(t) + D(t+dt))/2` for consecutive reports,
/// with `D = D0 + Dreg`. The continuous energy identity has `r = 0`.
pub fn energy_law_residual(reports: &[EnergyReport]) -> Result<ResidualSeries> {
    if reports.len() < 2 {
        return Err(Error::InsufficientLevels {
            needed: 2,
            got: reports.len(),
        });
    }
    let dt = reports[1].t - reports[0].t;
    if !(dt > 0.0) {
        return Err(Error::NonUniformSpacing);
    }
    let mut series = ResidualSeries {
        t: Vec::with_capacity(reports.len() - 1),
        values: Vec::with_capacity(reports.len() - 1),
        max: 0.0,
    };
    for w in reports.windows(2) {
        let h = w[1].t - w[0].t;
        if (h - dt).abs() > 1e-9 * dt {
            return Err(Error::NonUniformSpacing);
        }
        let r = (w[1].total - w[0].total) / h + 0.5 * (w[0].dissipation() + w[1].dissipation());
        series.t.push(w[1].t);
        series.values.push(r);
        series.max = series.max.max(r.abs());
    }
    Ok(series)
}

/// Instantaneous residuals of the mean-value ODEs, with time derivatives
/// taken from the model right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanDiagnostics {
    pub u_mean: Vec<f64>,
    /// `φ_Ω' + σφ_Ω - π_Ω` (variational mode: `φ_Ω' + ε∫f_n(φ) - π_Ω`).
    pub phi_residual: f64,
    /// `κπ_Ω' + π_Ω + ∫f_n(φ)`.
    pub pi_residual: f64,
    /// `κφ_Ω'' + (1+κσ)φ_Ω' + σφ_Ω + ∫f_n(φ)` with `φ_Ω'' = π_Ω' - σφ_Ω'`.
    pub combined_residual: f64,
}

pub fn mean_diagnostics(state: &SystemState, params: &ModelParams) -> MeanDiagnostics {
    let rates = full_tendency(state, params);
    let f_int = projected_nonlinearity(&state.phi, params).mean();
    let (phi_m, pi_m) = (state.phi.mean(), state.pi.mean());
    let (dphi, dpi) = (rates.phi.mean(), rates.pi.mean());
    let sigma = params.phi_damping();

    let phi_residual = match params.reg_mode {
        RegMode::Linear => dphi + sigma * phi_m - pi_m,
        RegMode::Variational => dphi + params.epsilon * f_int - pi_m,
    };
    let pi_residual = params.kappa * dpi + pi_m + f_int;
    let ddphi = dpi - sigma * dphi;
    let combined_residual =
        params.kappa * ddphi + (1.0 + params.kappa * sigma) * dphi + sigma * phi_m + f_int;

    MeanDiagnostics {
        u_mean: rates_u_means(state),
        phi_residual,
        pi_residual,
        combined_residual,
    }
}

fn rates_u_means(state: &SystemState) -> Vec<f64> {
    state.u.components().iter().map(|c| c.mean()).collect()
}

/// Largest η satisfying `κη <= 2/3`, `2 - ηκ - (η/2)(1 + (1+κσ)²) > 0` and
/// `3ε/2 - ηκ²ε²/2 > 0`. `None` when `ε = 0` (the last constraint fails).
pub fn eta_max(params: &ModelParams) -> Option<f64> {
    let k = params.kappa;
    let s = params.sigma;
    let e = params.epsilon;
    if !(e > 0.0) {
        return None;
    }
    let a = 2.0 / (3.0 * k);
    let b = 2.0 / (k + 0.5 * (1.0 + (1.0 + k * s).powi(2)));
    let c = 3.0 / (k * k * e);
    Some(a.min(b).min(c))
}

/// Default η: 0.9 times [`eta_max`].
pub fn default_eta(params: &ModelParams) -> Option<f64> {
    eta_max(params).map(|m| 0.9 * m)
}

pub fn eta_admissible(params: &ModelParams, eta: f64) -> bool {
    let k = params.kappa;
    let s = params.sigma;
    let e = params.epsilon;
    eta > 0.0
        && k * eta <= 2.0 / 3.0
        && 2.0 - eta * k - 0.5 * eta * (1.0 + (1.0 + k * s).powi(2)) > 0.0
        && 1.5 * e - 0.5 * eta * k * k * e * e > 0.0
}

/// `(G, D)` with `D = G + ηκ(π, φ)`.
pub fn dissipativity_functionals(
    state: &SystemState,
    params: &ModelParams,
    eta: f64,
) -> Result<(f64, f64)> {
    if !eta_admissible(params, eta) {
        return Err(invalid_param("eta", format!("η = {eta} violates the admissibility constraints")));
    }
    let nl = params.nonlinearity();
    let two_f = 2.0 * state.phi.to_padded().map(|v| nl.antiderivative(v)).quadrature();
    let g = g_functional(state, params, state.phi.grad_norm_sq(), two_f);
    Ok((g, g + eta * params.kappa * state.pi.inner(&state.phi)))
}

/// Norms used by the dissipativity and continuous-dependence statements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub u_h: f64,
    /// Full H¹ norm `(‖u‖² + ‖∇u‖²)^{1/2}`.
    pub u_v: f64,
    pub phi_v: f64,
    /// `‖φ‖_{L^{p+2}}`.
    pub phi_lp: f64,
    pub pi_h: f64,
    pub lap_phi_h: f64,
}

impl Norms {
    /// `‖u‖_H + ‖φ‖_V + ‖φ‖_{L^{p+2}} + ‖π‖_H`.
    pub fn bundle(&self) -> f64 {
        self.u_h + self.phi_v + self.phi_lp + self.pi_h
    }
}

pub fn norms(state: &SystemState, params: &ModelParams) -> Norms {
    let q = params.potential.p_growth() + 2.0;
    let u_sq = state.u.norm_sq();
    let phi_sq = state.phi.norm_sq();
    let lp = state.phi.to_padded().map(|v| v.abs().powf(q)).quadrature();
    Norms {
        u_h: u_sq.sqrt(),
        u_v: (u_sq + state.u.grad_norm_sq()).sqrt(),
        phi_v: (phi_sq + state.phi.grad_norm_sq()).sqrt(),
        phi_lp: lp.powf(1.0 / q),
        pi_h: state.pi.norm(),
        lap_phi_h: state.phi.laplacian().norm(),
    }
}

/// Squared difference bundle `‖Δu‖²_H + ‖Δφ‖²_V + ‖Δπ‖²_H` between two states.
pub fn difference_sq(a: &SystemState, b: &SystemState) -> f64 {
    let du = a.u.sub(&b.u);
    let dphi = a.phi.sub(&b.phi);
    let dpi = a.pi.sub(&b.pi);
    du.norm_sq() + dphi.norm_sq() + dphi.grad_norm_sq() + dpi.norm_sq()
}
