//! Model data and spatial right-hand sides.
//!
//! The system evolved here is
//!
//! ```text
//! u_t + u·∇u + ∇p - Δu = -div(∇φ⊗∇φ),        div u = 0,
//! π   = φ_t + u·∇φ + π_reg,
//! κ π_t + δ u·∇π + π - Δφ + f(φ) = 0,
//! ```
//!
//! with `π_reg = -εΔφ + σφ` ([`RegMode::Linear`]) or `π_reg = ε(-Δφ + f(φ))`
//! ([`RegMode::Variational`]). Pressure is never formed: the momentum
//! tendency is Leray-projected.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::spectral::{leray_project, Grid, PaddedField, SpectralField, VelocityField};

/// Which polynomial configuration potential `F` is used.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `F(s) = (s² - 1)²`.
    DoubleWell,
    /// `F(s) = Σ_i c_i s^i`, coefficients in ascending order.
    Polynomial(Vec<f64>),
}

/// Configuration potential together with its growth exponent `p` (so that
/// `f'` grows like `|s|^p`), its convexity defect `λ₀ = max(0, -inf f')`, and
/// the offset constant used by the dissipativity functional.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    kind: PotentialKind,
    p_growth: f64,
    lambda0: f64,
    offset: f64,
}

impl PotentialSpec {
    pub fn double_well() -> Self {
        // max_s (s² - 2F(s)) is attained at s² = 5/4
        Self {
            kind: PotentialKind::DoubleWell,
            p_growth: 2.0,
            lambda0: 4.0,
            offset: 1.125,
        }
    }

    /// General polynomial potential. Requires even degree >= 4 and a
    /// positive leading coefficient.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        let degree = coeffs.len().saturating_sub(1);
        if degree < 4 || degree % 2 != 0 {
            return Err(invalid_param(
                "potential_coeffs",
                format!("polynomial potential must have even degree >= 4, got {degree}"),
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid_param("potential_coeffs", "coefficients must be finite"));
        }
        if coeffs[degree] <= 0.0 {
            return Err(invalid_param(
                "potential_coeffs",
                "leading coefficient must be positive",
            ));
        }
        let second = poly_derivative(&poly_derivative(&coeffs));
        let lambda0 = (-poly_minimum(&second)).max(0.0);
        // 2F(s) - s²
        let mut g: Vec<f64> = coeffs.iter().map(|c| 2.0 * c).collect();
        g[2] -= 1.0;
        let offset = -poly_minimum(&g);
        Ok(Self {
            kind: PotentialKind::Polynomial(coeffs),
            p_growth: (degree - 2) as f64,
            lambda0,
            offset,
        })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    /// Ascending coefficients of `F`.
    pub fn coeffs(&self) -> Vec<f64> {
        match &self.kind {
            PotentialKind::DoubleWell => vec![1.0, 0.0, -2.0, 0.0, 1.0],
            PotentialKind::Polynomial(c) => c.clone(),
        }
    }

    pub fn p_growth(&self) -> f64 {
        self.p_growth
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Constant `C` with `‖φ‖²_V <= ‖∇φ‖² + 2∫F(φ) + C` for every `φ`,
    /// i.e. `C = max_s (s² - 2F(s))`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `F(s)`.
    pub fn potential_f_big(&self, s: f64) -> f64 {
        match &self.kind {
            PotentialKind::DoubleWell => {
                let a = s * s - 1.0;
                a * a
            }
            PotentialKind::Polynomial(c) => horner(c, s),
        }
    }

    /// `f(s) = F'(s)`.
    pub fn potential_f(&self, s: f64) -> f64 {
        match &self.kind {
            PotentialKind::DoubleWell => 4.0 * s * s * s - 4.0 * s,
            PotentialKind::Polynomial(c) => horner_derivative(c, 1, s),
        }
    }

    /// `f'(s) = F''(s)`.
    pub fn potential_fprime(&self, s: f64) -> f64 {
        match &self.kind {
            PotentialKind::DoubleWell => 12.0 * s * s - 4.0,
            PotentialKind::Polynomial(c) => horner_derivative(c, 2, s),
        }
    }
}

fn horner(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * s + a)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &a)| a * i as f64)
        .collect()
}

fn horner_derivative(c: &[f64], order: usize, s: f64) -> f64 {
    let mut d = c.to_vec();
    for _ in 0..order {
        d = poly_derivative(&d);
    }
    horner(&d, s)
}

/// Global minimum of a coercive polynomial (even degree, positive leading
/// coefficient): dense sampling inside the Cauchy root bound of its
/// derivative, then golden-section refinement of every sampled local minimum.
fn poly_minimum(c: &[f64]) -> f64 {
    let d = poly_derivative(c);
    let lead = *d.last().unwrap_or(&1.0);
    if d.len() <= 1 {
        return c.first().copied().unwrap_or(0.0);
    }
    let radius = 1.0
        + d[..d.len() - 1]
            .iter()
            .map(|a| (a / lead).abs())
            .fold(0.0, f64::max);
    let samples = 8000usize;
    let h = 2.0 * radius / samples as f64;
    let xs: Vec<f64> = (0..=samples).map(|i| -radius + i as f64 * h).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| horner(c, x)).collect();
    let mut best = f64::INFINITY;
    for i in 0..=samples {
        let left = if i == 0 { f64::INFINITY } else { ys[i - 1] };
        let right = if i == samples { f64::INFINITY } else { ys[i + 1] };
        if ys[i] <= left && ys[i] <= right {
            best = best.min(golden_min(c, xs[i] - h, xs[i] + h));
        }
    }
    best
}

fn golden_min(c: &[f64], mut a: f64, mut b: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (horner(c, x1), horner(c, x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = horner(c, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = horner(c, x2);
        }
    }
    f1.min(f2)
}

/// The nonlinearity actually used by the solver: `f` itself, or its C¹
/// bounded truncation `f_n` which equals `f` on `[-n, n]` and saturates as
/// `f(±n) + n f'(±n) tanh((r ∓ n)/n)` outside.
#[derive(Debug, Clone, Copy)]
pub struct Nonlinearity<'a> {
    potential: &'a PotentialSpec,
    level: Option<f64>,
}

/// Build the truncated nonlinearity `f_n`.
pub fn truncate_f(potential: &PotentialSpec, n: f64) -> Result<Nonlinearity<'_>> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid_param("truncation", format!("level must be positive, got {n}")));
    }
    Ok(Nonlinearity {
        potential,
        level: Some(n),
    })
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl<'a> Nonlinearity<'a> {
    pub fn untruncated(potential: &'a PotentialSpec) -> Self {
        Self {
            potential,
            level: None,
        }
    }

    pub fn level(&self) -> Option<f64> {
        self.level
    }

    /// Edge of the identity region that `r` lies beyond, if any.
    fn edge(&self, r: f64) -> Option<f64> {
        let n = self.level?;
        if r > n {
            Some(n)
        } else if r < -n {
            Some(-n)
        } else {
            None
        }
    }

    pub fn f(&self, r: f64) -> f64 {
        match self.edge(r) {
            None => self.potential.potential_f(r),
            Some(e) => {
                let n = e.abs();
                self.potential.potential_f(e)
                    + n * self.potential.potential_fprime(e) * ((r - e) / n).tanh()
            }
        }
    }

    pub fn fprime(&self, r: f64) -> f64 {
        match self.edge(r) {
            None => self.potential.potential_fprime(r),
            Some(e) => {
                let n = e.abs();
                let c = ((r - e) / n).cosh();
                self.potential.potential_fprime(e) / (c * c)
            }
        }
    }

    /// Antiderivative `F_n` matching `F` on `[-n, n]`.
    pub fn antiderivative(&self, r: f64) -> f64 {
        match self.edge(r) {
            None => self.potential.potential_f_big(r),
            Some(e) => {
                let n = e.abs();
                self.potential.potential_f_big(e)
                    + self.potential.potential_f(e) * (r - e)
                    + n * n * self.potential.potential_fprime(e) * ln_cosh((r - e) / n)
            }
        }
    }
}

/// How the regularization part of the π-definition is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegMode {
    /// `π_reg = -εΔφ + σφ`.
    Linear,
    /// `π_reg = ε(-Δφ + f(φ))`; `σ` is unused.
    Variational,
}

/// Coefficients of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kappa: f64,
    pub delta: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub potential: PotentialSpec,
    pub reg_mode: RegMode,
    /// Truncation level `n` of `f_n`; `None` uses `f` directly.
    pub truncation: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            delta: 0.0,
            sigma: 0.5,
            epsilon: 0.1,
            potential: PotentialSpec::double_well(),
            reg_mode: RegMode::Linear,
            truncation: None,
        }
    }
}

impl ModelParams {
    /// Check parameter ranges. Returns the warnings for accepted but
    /// theoretically unsupported settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(invalid_param("kappa", "κ > 0 required"));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(invalid_param("delta", "δ >= 0 required"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(invalid_param("sigma", "σ >= 0 required"));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(invalid_param("epsilon", "ε >= 0 required"));
        }
        if let Some(n) = self.truncation {
            truncate_f(&self.potential, n)?;
        }
        if self.epsilon == 0.0 {
            warnings.push(
                "epsilon = 0: no viscous regularization, weak-solution theory does not apply"
                    .to_string(),
            );
        }
        if self.reg_mode == RegMode::Variational && self.sigma != 0.0 {
            warnings.push("sigma is ignored in variational regularization mode".to_string());
        }
        Ok(warnings)
    }

    pub fn nonlinearity(&self) -> Nonlinearity<'_> {
        Nonlinearity {
            potential: &self.potential,
            level: self.truncation,
        }
    }

    /// Coefficient of `φ` in the π-definition (`σ`, or 0 in variational mode).
    pub fn phi_damping(&self) -> f64 {
        match self.reg_mode {
            RegMode::Linear => self.sigma,
            RegMode::Variational => 0.0,
        }
    }
}

/// Full dynamical state `(u, φ, π)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub u: VelocityField,
    pub phi: SpectralField,
    pub pi: SpectralField,
    pub t: f64,
}

impl SystemState {
    pub fn new(u: VelocityField, phi: SpectralField, pi: SpectralField, t: f64) -> Result<Self> {
        let g = u.grid();
        if phi.grid() != g || pi.grid() != g {
            return Err(Error::GridMismatch);
        }
        Ok(Self { u, phi, pi, t })
    }

    /// `u = 0`, spatially constant `φ` and `π`.
    pub fn homogeneous(grid: Grid, phi: f64, pi: f64) -> Self {
        Self {
            u: VelocityField::zeros(grid),
            phi: SpectralField::constant(grid, phi),
            pi: SpectralField::constant(grid, pi),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.u.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.phi.is_finite() && self.pi.is_finite()
    }

    /// Drop Nyquist modes from every field.
    pub fn band_limited(&self) -> Self {
        let comps = self
            .u
            .components()
            .iter()
            .map(|c| c.band_limited())
            .collect();
        Self {
            u: VelocityField::from_components_unchecked(comps),
            phi: self.phi.band_limited(),
            pi: self.pi.band_limited(),
            t: self.t,
        }
    }
}

/// Time derivative of every field, velocity part already projected.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub u: VelocityField,
    pub phi: SpectralField,
    pub pi: SpectralField,
}

impl Tendency {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            u: VelocityField::zeros(grid),
            phi: SpectralField::zeros(grid),
            pi: SpectralField::zeros(grid),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &Tendency) {
        self.u.axpy(a, &other.u);
        self.phi.axpy(a, &other.phi);
        self.pi.axpy(a, &other.pi);
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.phi.is_finite() && self.pi.is_finite()
    }
}

/// Capillary forcing `-div(∇φ⊗∇φ)`, each tensor entry an alias-free product.
pub fn korteweg_stress(phi: &SpectralField) -> Vec<SpectralField> {
    let grad: Vec<PaddedField> = phi.gradient().iter().map(|g| g.to_padded()).collect();
    korteweg_from_padded_gradient(phi.grid(), &grad)
}

fn korteweg_from_padded_gradient(grid: Grid, grad: &[PaddedField]) -> Vec<SpectralField> {
    let dim = grid.dim();
    let mut entries: Vec<Vec<Option<SpectralField>>> = vec![vec![None; dim]; dim];
    for i in 0..dim {
        for j in i..dim {
            let t = grad[i].mul(&grad[j]).to_spectral();
            entries[j][i] = Some(t.clone());
            entries[i][j] = Some(t);
        }
    }
    (0..dim)
        .map(|i| {
            let mut s = SpectralField::zeros(grid);
            for (j, entry) in entries[i].iter().enumerate() {
                let t = entry.as_ref().expect("filled above");
                s.axpy(-1.0, &t.partial(j));
            }
            s
        })
        .collect()
}

/// Alias-free transport `u·∇s`.
pub fn convect(u: &VelocityField, s: &SpectralField) -> SpectralField {
    let up: Vec<PaddedField> = u.components().iter().map(|c| c.to_padded()).collect();
    convect_padded(&up, s)
}

fn convect_padded(u: &[PaddedField], s: &SpectralField) -> SpectralField {
    let grid = s.grid();
    let mut acc = PaddedField::zeros(grid);
    for (axis, comp) in u.iter().enumerate() {
        acc.add_product(comp, &s.partial(axis).to_padded());
    }
    acc.to_spectral()
}

/// `Π f_n(φ)`: the nonlinearity collocated on the padded grid and truncated
/// back to the base band.
pub fn projected_nonlinearity(phi: &SpectralField, params: &ModelParams) -> SpectralField {
    let nl = params.nonlinearity();
    phi.to_padded().map(|v| nl.f(v)).to_spectral()
}

/// Terms of the velocity equation without the viscous part:
/// `P(-u·∇u - div(∇φ⊗∇φ))`.
fn velocity_explicit(state: &SystemState, u_pad: &[PaddedField]) -> VelocityField {
    let grid = state.grid();
    let mut korteweg = korteweg_stress(&state.phi);
    for (i, comp) in state.u.components().iter().enumerate() {
        korteweg[i].axpy(-1.0, &convect_padded(u_pad, comp));
    }
    leray_project(&korteweg).unwrap_or_else(|_| VelocityField::zeros(grid))
}

/// Full velocity tendency `P(-u·∇u + Δu - div(∇φ⊗∇φ))`.
pub fn rhs_velocity(state: &SystemState) -> VelocityField {
    let u_pad: Vec<PaddedField> = state.u.components().iter().map(|c| c.to_padded()).collect();
    let mut out = velocity_explicit(state, &u_pad);
    for (o, c) in out.components_mut().iter_mut().zip(state.u.components()) {
        o.axpy(1.0, &c.laplacian());
    }
    out
}

/// Explicitly treated terms: advection, transport, Korteweg forcing and the
/// nonlinearity.
pub fn explicit_tendency(state: &SystemState, params: &ModelParams) -> Tendency {
    let u_pad: Vec<PaddedField> = state.u.components().iter().map(|c| c.to_padded()).collect();
    let u = velocity_explicit(state, &u_pad);
    let fphi = projected_nonlinearity(&state.phi, params);

    let mut phi = convect_padded(&u_pad, &state.phi);
    phi.scale(-1.0);
    if params.reg_mode == RegMode::Variational {
        phi.axpy(-params.epsilon, &fphi);
    }

    let mut pi = fphi;
    if params.delta != 0.0 {
        pi.axpy(params.delta, &convect_padded(&u_pad, &state.pi));
    }
    pi.scale(-1.0 / params.kappa);
    Tendency { u, phi, pi }
}

/// Per-mode linear block acting on `(φ(k), π(k))`:
/// `[[-ε|2πk|² - σ, 1], [-|2πk|²/κ, -1/κ]]` (σ dropped in variational mode).
pub fn phase_block(params: &ModelParams, k2: f64) -> [[f64; 2]; 2] {
    [
        [-params.epsilon * k2 - params.phi_damping(), 1.0],
        [-k2 / params.kappa, -1.0 / params.kappa],
    ]
}

/// Implicitly treated linear terms: viscosity and the phase block.
pub fn linear_tendency(state: &SystemState, params: &ModelParams) -> Tendency {
    let grid = state.grid();
    let comps = state.u.components().iter().map(|c| c.laplacian()).collect();
    let mut phi = SpectralField::zeros(grid);
    let mut pi = SpectralField::zeros(grid);
    for i in 0..grid.len() {
        let b = phase_block(params, -grid.laplacian_symbol(i));
        let (p, q) = (state.phi.coeffs()[i], state.pi.coeffs()[i]);
        phi.coeffs_mut()[i] = p * b[0][0] + q * b[0][1];
        pi.coeffs_mut()[i] = p * b[1][0] + q * b[1][1];
    }
    Tendency {
        u: VelocityField::from_components_unchecked(comps),
        phi,
        pi,
    }
}

/// Full time derivative of the state.
pub fn full_tendency(state: &SystemState, params: &ModelParams) -> Tendency {
    let mut t = linear_tendency(state, params);
    t.axpy(1.0, &explicit_tendency(state, params));
    t
}

/// `(φ_t, π_t)` of the phase pair.
pub fn rhs_phase_pair(state: &SystemState, params: &ModelParams) -> (SpectralField, SpectralField) {
    let t = full_tendency(state, params);
    (t.phi, t.pi)
}

/// Taylor–Green vortex `(sin 2πx cos 2πy, -cos 2πx sin 2πy)` of amplitude `a`
/// (extended by zero in 3D).
pub fn taylor_green(grid: Grid, amplitude: f64) -> VelocityField {
    let w = 2.0 * PI;
    let mut comps = vec![
        SpectralField::from_fn(grid, |x| amplitude * (w * x[0]).sin() * (w * x[1]).cos()),
        SpectralField::from_fn(grid, |x| -amplitude * (w * x[0]).cos() * (w * x[1]).sin()),
    ];
    if grid.dim() == 3 {
        comps.push(SpectralField::zeros(grid));
    }
    leray_project(&comps).expect("components share grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_well_values() {
        let p = PotentialSpec::double_well();
        assert_eq!(p.potential_f(1.0), 0.0);
        assert_eq!(p.potential_f(-1.0), 0.0);
        assert_eq!(p.potential_f_big(0.0), 1.0);
        assert_eq!(p.potential_f(0.0), 0.0);
        // F = s⁴ - 2s² + 1 ⇒ f = 4s³ - 4s, f' = 12s² - 4
        assert_eq!(p.potential_f(2.0), 24.0);
        assert_eq!(p.potential_fprime(2.0), 44.0);
    }

    #[test]
    fn polynomial_copy_of_double_well_recovers_constants() {
        let p = PotentialSpec::polynomial(vec![1.0, 0.0, -2.0, 0.0, 1.0]).unwrap();
        let dw = PotentialSpec::double_well();
        assert_eq!(p.p_growth(), 2.0);
        assert!((p.lambda0() - dw.lambda0()).abs() < 1e-10);
        assert!((p.offset() - dw.offset()).abs() < 1e-10);
        for s in [-2.5, -1.0, 0.0, 0.3, 1.7] {
            assert!((p.potential_f(s) - dw.potential_f(s)).abs() < 1e-12);
            assert!((p.potential_fprime(s) - dw.potential_fprime(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_rejects_bad_degree() {
        assert!(PotentialSpec::polynomial(vec![0.0, 0.0, 1.0]).is_err());
        assert!(PotentialSpec::polynomial(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).is_err());
        assert!(PotentialSpec::polynomial(vec![1.0, 0.0, 0.0, 0.0, -1.0]).is_err());
    }

    #[test]
    fn truncation_identity_and_saturation() {
        let p = PotentialSpec::double_well();
        let n = 2.0;
        let fn_ = truncate_f(&p, n).unwrap();
        for r in [-2.0, -1.3, 0.0, 0.7, 2.0] {
            assert_eq!(fn_.f(r), p.potential_f(r));
        }
        let limit = p.potential_f(n) + n * p.potential_fprime(n);
        assert!((fn_.f(1e6) - limit).abs() < 1e-9);
        assert!((fn_.f(-1e6) + limit).abs() < 1e-9);
        assert!(truncate_f(&p, 0.0).is_err());
        assert!(truncate_f(&p, -1.0).is_err());
    }

    #[test]
    fn truncation_is_c1_at_the_edge() {
        let p = PotentialSpec::double_well();
        let n = 3.0;
        let fn_ = truncate_f(&p, n).unwrap();
        let slope = p.potential_fprime(n);
        // the tanh tail has zero curvature at r = n, so the forward quotient is
        // second-order accurate
        let h = 1e-5;
        let right = (fn_.f(n + h) - fn_.f(n)) / h;
        assert!((right - slope).abs() <= 1e-10 * slope.abs(), "{right} vs {slope}");
        // backward quotient on the polynomial side, second-order stencil
        let left = (3.0 * fn_.f(n) - 4.0 * fn_.f(n - h) + fn_.f(n - 2.0 * h)) / (2.0 * h);
        assert!((left - slope).abs() <= 1e-8 * slope.abs(), "{left} vs {slope}");
        assert!((fn_.fprime(n + 1e-12) - slope).abs() < 1e-9);
    }

    #[test]
    fn truncated_antiderivative_matches_numerical_integral() {
        let p = PotentialSpec::double_well();
        let fn_ = truncate_f(&p, 1.5).unwrap();
        let (a, b) = (1.0, 4.0);
        let steps = 20000;
        let h = (b - a) / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| {
                let x = a + (i as f64 + 0.5) * h;
                fn_.f(x) * h
            })
            .sum();
        let exact = fn_.antiderivative(b) - fn_.antiderivative(a);
        assert!((integral - exact).abs() < 1e-6 * exact.abs());
    }

    #[test]
    fn params_validation() {
        let mut p = ModelParams::default();
        assert!(p.validate().unwrap().is_empty());
        p.kappa = 0.0;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("κ > 0 required"), "{err}");
        p.kappa = 1.0;
        p.epsilon = 0.0;
        assert_eq!(p.validate().unwrap().len(), 1);
        p.sigma = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn equilibria_have_zero_tendency() {
        let g = Grid::new(2, 16).unwrap();
        let params = ModelParams::default();
        for phi in [1.0, 0.0, -1.0] {
            let s = SystemState::homogeneous(g, phi, 0.0);
            let mut p = params.clone();
            p.sigma = 0.0;
            let (a, b) = rhs_phase_pair(&s, &p);
            assert!(a.max_abs_coeff() < 1e-15);
            assert!(b.max_abs_coeff() < 1e-15);
        }
    }

    #[test]
    fn constant_state_reduces_to_ode() {
        let g = Grid::new(2, 16).unwrap();
        let params = ModelParams {
            kappa: 0.5,
            sigma: 0.3,
            ..ModelParams::default()
        };
        let (phi0, pi0) = (0.7, -0.2);
        let s = SystemState::homogeneous(g, phi0, pi0);
        let (a, b) = rhs_phase_pair(&s, &params);
        let f = params.potential.potential_f(phi0);
        assert!((a.mean() - (pi0 - params.sigma * phi0)).abs() < 1e-14);
        assert!((b.mean() + (pi0 + f) / params.kappa).abs() < 1e-14);
        assert!(a.coeffs()[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn rest_states_have_zero_velocity_tendency() {
        let g = Grid::new(2, 16).unwrap();
        let s = SystemState::homogeneous(g, 0.3, 0.0);
        assert_eq!(rhs_velocity(&s).norm(), 0.0);
        let mut s = s;
        s.phi = SpectralField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        assert!(rhs_velocity(&s).norm() < 1e-12);
    }

    #[test]
    fn sine_korteweg_stress() {
        let g = Grid::new(2, 16).unwrap();
        let phi = SpectralField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let s = korteweg_stress(&phi);
        let expect = SpectralField::from_fn(g, |x| 8.0 * PI.powi(3) * (4.0 * PI * x[0]).sin());
        assert!(s[0].sub(&expect).max_abs_coeff() < 1e-11);
        assert!(s[1].max_abs_coeff() < 1e-15);
        assert!(leray_project(&s).unwrap().norm() < 1e-11);
    }

    #[test]
    fn convect_examples() {
        let g = Grid::new(2, 16).unwrap();
        let w = 2.0 * PI;
        let u = leray_project(&[
            SpectralField::from_fn(g, |x| (w * x[1]).sin()),
            SpectralField::zeros(g),
        ])
        .unwrap();
        let s = SpectralField::from_fn(g, |x| (w * x[0]).sin());
        let c = convect(&u, &s);
        let expect = SpectralField::from_fn(g, |x| w * (w * x[1]).sin() * (w * x[0]).cos());
        assert!(c.sub(&expect).max_abs_coeff() < 1e-13);
        assert!(c.mean().abs() < 1e-15);
        assert_eq!(convect(&u, &SpectralField::constant(g, 2.0)).norm(), 0.0);
        assert_eq!(convect(&VelocityField::zeros(g), &s).norm(), 0.0);
    }
}
