//! Fourier representation of real periodic fields on the unit torus `[0,1]^d`.
//!
//! Coefficients are stored on the full `n^d` lattice in FFT order (row-major,
//! axis 0 slowest) and normalized so that the zero mode is the spatial mean:
//!
//! ```text
//! c(k) = n^{-d} Σ_x v(x) e^{-2πi k·x},   v(x) = Σ_k c(k) e^{2πi k·x}.
//! ```
//!
//! With this convention the discrete L² product on the unit torus is simply
//! `Σ_k Re(a(k) conj b(k))` (Parseval), and every derivative is the exact
//! multiplier `i 2π k_j`. Nonlinear products go through a 3/2 zero-padded
//! grid, see [`PaddedField`].

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Relative tolerance for the Hermitian-symmetry check in [`SpectralField::to_physical`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Relative tolerance used when validating [`VelocityField`] invariants.
pub const VELOCITY_TOL: f64 = 1e-12;

/// Uniform periodic grid on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per dimension must be even and >= 8, got {n}"
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of lattice points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn nyquist(&self) -> i64 {
        (self.n / 2) as i64
    }

    /// Points per dimension of the 3/2 dealiasing grid.
    pub fn padded_n(&self) -> usize {
        3 * self.n / 2
    }

    pub fn padded_len(&self) -> usize {
        self.padded_n().pow(self.dim as u32)
    }

    /// Signed wavenumber of a one-dimensional FFT index. The Nyquist index is
    /// reported as `+n/2`.
    pub fn wavenumber_1d(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Lattice wavenumber of a flat index; unused trailing components are 0.
    pub fn wavenumber(&self, flat: usize) -> [i64; 3] {
        let mut k = [0i64; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            k[axis] = self.wavenumber_1d(rem % self.n);
            rem /= self.n;
        }
        k
    }

    /// Flat index of a wavenumber with `|k_i| <= n/2`, `None` when outside.
    pub fn index_of(&self, k: [i64; 3]) -> Option<usize> {
        let n = self.n as i64;
        let mut flat = 0usize;
        for (axis, &kj) in k.iter().enumerate() {
            if axis >= self.dim {
                if kj != 0 {
                    return None;
                }
                continue;
            }
            if kj.abs() > n / 2 {
                return None;
            }
            flat = flat * self.n + kj.rem_euclid(n) as usize;
        }
        Some(flat)
    }

    /// Flat index of `-k` for the mode stored at `flat`.
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let mut out = 0usize;
        let mut stride = 1usize;
        let mut rem = flat;
        for _ in 0..self.dim {
            let i = rem % self.n;
            rem /= self.n;
            out += ((self.n - i) % self.n) * stride;
            stride *= self.n;
        }
        out
    }

    /// True when any component of the mode sits on the Nyquist index.
    pub fn is_nyquist(&self, flat: usize) -> bool {
        let k = self.wavenumber(flat);
        k[..self.dim].iter().any(|&kj| kj == self.nyquist())
    }

    /// Physical coordinates of the grid point `flat`.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            x[axis] = (rem % self.n) as f64 * self.spacing();
            rem /= self.n;
        }
        x
    }

    /// `|2πk|²` for the mode at `flat`.
    pub fn k2(&self, flat: usize) -> f64 {
        let k = self.wavenumber(flat);
        k[..self.dim]
            .iter()
            .map(|&kj| {
                let w = TWO_PI * kj as f64;
                w * w
            })
            .sum()
    }

    /// Multiplier `-|2πk|²` of the Laplacian, zero on Nyquist modes.
    pub fn laplacian_symbol(&self, flat: usize) -> f64 {
        if self.is_nyquist(flat) {
            0.0
        } else {
            -self.k2(flat)
        }
    }

    fn padded_index(&self, flat: usize) -> Option<usize> {
        if self.is_nyquist(flat) {
            return None;
        }
        let k = self.wavenumber(flat);
        let m = self.padded_n() as i64;
        let mut out = 0usize;
        for &kj in &k[..self.dim] {
            out = out * self.padded_n() + kj.rem_euclid(m) as usize;
        }
        Some(out)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized d-dimensional FFT of a row-major `n^dim` array, axis by axis.
fn fft_nd(data: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // last axis is contiguous
    fft.process_with_scratch(data, &mut scratch);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..dim - 1 {
        let stride = n.pow((dim - 1 - axis) as u32);
        let outer = data.len() / (n * stride);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * n * stride + inner;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride] = *v;
                }
            }
        }
    }
}

/// Real periodic scalar field held by its Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    /// Transform physical samples (row-major, axis 0 slowest) into coefficients.
    pub fn to_spectral(values: &[f64], grid: Grid) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut data, grid.n(), grid.dim(), false);
        let scale = 1.0 / grid.len() as f64;
        for c in &mut data {
            *c *= scale;
        }
        Ok(Self {
            grid,
            coeffs: data,
        })
    }

    /// Sample a function of the physical coordinates and transform it.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values: Vec<f64> = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::to_spectral(&values, grid).expect("sample count matches grid")
    }

    /// Physical samples. Fails when the coefficients are not Hermitian to
    /// within [`HERMITIAN_TOL`]; the imaginary residue is discarded.
    pub fn to_physical(&self) -> Result<Vec<f64>> {
        let defect = self.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian { defect });
        }
        Ok(self.physical_values())
    }

    pub(crate) fn physical_values(&self) -> Vec<f64> {
        let mut data = self.coeffs.clone();
        fft_nd(&mut data, self.grid.n(), self.grid.dim(), true);
        data.into_iter().map(|c| c.re).collect()
    }

    /// `max |c(-k) - conj c(k)|` relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs_coeff();
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.coeffs.len())
            .map(|i| {
                let j = self.grid.conjugate_index(i);
                (self.coeffs[j] - self.coeffs[i].conj()).norm()
            })
            .fold(0.0, f64::max);
        worst / scale
    }

    /// Replace the field by its Hermitian part `(c(k) + conj c(-k)) / 2`.
    pub fn symmetrize(&mut self) {
        let old = self.coeffs.clone();
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            let j = self.grid.conjugate_index(i);
            *c = 0.5 * (old[i] + old[j].conj());
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of wavenumber `k`, zero outside the lattice.
    pub fn coeff(&self, k: [i64; 3]) -> Complex64 {
        self.grid
            .index_of(k)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    /// Spatial mean (the zero mode).
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Discrete L² inner product on the unit torus.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `‖∇f‖²` computed from the gradient multiplier.
    pub fn grad_norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| -self.grid.laplacian_symbol(i) * c.norm_sqr())
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        debug_assert_eq!(self.grid, other.grid);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += *o * a;
        }
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Multiply each coefficient by a per-mode complex symbol.
    pub fn map_modes(&self, symbol: impl Fn(usize) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * symbol(i))
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    /// Exact derivative along `axis` (multiplier `i 2π k_axis`).
    pub fn partial(&self, axis: usize) -> Self {
        let grid = self.grid;
        self.map_modes(|i| {
            if grid.is_nyquist(i) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, TWO_PI * grid.wavenumber(i)[axis] as f64)
            }
        })
    }

    pub fn gradient(&self) -> Vec<SpectralField> {
        (0..self.grid.dim()).map(|a| self.partial(a)).collect()
    }

    pub fn laplacian(&self) -> Self {
        let grid = self.grid;
        self.map_modes(|i| Complex64::new(grid.laplacian_symbol(i), 0.0))
    }

    /// Orthogonal projection onto modes with `|k|_∞ <= m`.
    pub fn galerkin_truncate(&self, m: usize) -> Result<Self> {
        let max = self.grid.n() / 2;
        if m == 0 || m > max {
            return Err(Error::CutoffOutOfRange { m, max });
        }
        let grid = self.grid;
        Ok(self.map_modes(|i| {
            let k = grid.wavenumber(i);
            let inf = k[..grid.dim()].iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
            if inf as usize > m {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        }))
    }

    /// Drop the Nyquist modes, leaving the band the solver evolves.
    pub fn band_limited(&self) -> Self {
        self.galerkin_truncate(self.grid.n() / 2 - 1)
            .expect("n >= 8 keeps n/2 - 1 in range")
    }

    /// Samples on the 3/2 zero-padded grid. Nyquist modes are treated as zero.
    pub fn to_padded(&self) -> PaddedField {
        let grid = self.grid;
        let mut data = vec![Complex64::new(0.0, 0.0); grid.padded_len()];
        for (i, c) in self.coeffs.iter().enumerate() {
            if let Some(p) = grid.padded_index(i) {
                data[p] = *c;
            }
        }
        fft_nd(&mut data, grid.padded_n(), grid.dim(), true);
        PaddedField {
            grid,
            values: data.into_iter().map(|c| c.re).collect(),
        }
    }
}

/// Pointwise values of a field on the 3/2 zero-padded grid associated with a
/// base [`Grid`]. Products of two band-limited fields computed here and
/// truncated back with [`PaddedField::to_spectral`] are alias-free.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedField {
    grid: Grid,
    values: Vec<f64>,
}

impl PaddedField {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.padded_len() {
            return Err(Error::SizeMismatch {
                expected: grid.padded_len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mul(&self, other: &PaddedField) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    /// `self += a * other`, pointwise.
    pub fn add_product(&mut self, a: &PaddedField, b: &PaddedField) {
        for ((v, x), y) in self.values.iter_mut().zip(&a.values).zip(&b.values) {
            *v += x * y;
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.padded_len()],
        }
    }

    /// Mean over the padded grid: the quadrature used for `∫ g dx`.
    pub fn quadrature(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Transform back and keep the base band (Nyquist modes set to zero).
    pub fn to_spectral(&self) -> SpectralField {
        let grid = self.grid;
        let mut data: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut data, grid.padded_n(), grid.dim(), false);
        let scale = 1.0 / grid.padded_len() as f64;
        let mut out = SpectralField::zeros(grid);
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if let Some(p) = grid.padded_index(i) {
                *c = data[p] * scale;
            }
        }
        out
    }
}

/// Alias-free product of two fields via the 3/2 padded grid.
pub fn dealias_product(a: &SpectralField, b: &SpectralField) -> Result<SpectralField> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    Ok(a.to_padded().mul(&b.to_padded()).to_spectral())
}

/// Spectral divergence `Σ_j i 2π k_j v_j`.
pub fn divergence(v: &[SpectralField]) -> SpectralField {
    let mut out = SpectralField::zeros(v[0].grid);
    for (axis, comp) in v.iter().enumerate() {
        out.axpy(1.0, &comp.partial(axis));
    }
    out
}

/// Leray projection onto zero-mean divergence-free fields:
/// `v(k) ↦ v(k) - k (k·v(k)) / |k|²`, with the zero mode removed.
///
/// Nyquist modes have no well-defined sign of `k` and are removed as well,
/// matching the differentiation operators.
pub fn leray_project(v: &[SpectralField]) -> Result<VelocityField> {
    let grid = v.first().ok_or(Error::GridMismatch)?.grid;
    if v.len() != grid.dim() || v.iter().any(|c| c.grid != grid) {
        return Err(Error::GridMismatch);
    }
    let dim = grid.dim();
    let mut out: Vec<SpectralField> = v.to_vec();
    for i in 0..grid.len() {
        if i == 0 || grid.is_nyquist(i) {
            for comp in &mut out {
                comp.coeffs[i] = Complex64::new(0.0, 0.0);
            }
            continue;
        }
        let k = grid.wavenumber(i);
        let k2: f64 = k[..dim].iter().map(|&x| (x * x) as f64).sum();
        let mut dot = Complex64::new(0.0, 0.0);
        for (axis, comp) in v.iter().enumerate() {
            dot += comp.coeffs[i] * k[axis] as f64;
        }
        let dot = dot / k2;
        for (axis, comp) in out.iter_mut().enumerate() {
            comp.coeffs[i] -= dot * k[axis] as f64;
        }
    }
    Ok(VelocityField { components: out })
}

/// Zero-mean, divergence-free velocity field with one spectral component per
/// spatial direction.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    components: Vec<SpectralField>,
}

impl VelocityField {
    /// Validate and wrap `d` components. Use [`leray_project`] to build a
    /// valid field from arbitrary data.
    pub fn new(components: Vec<SpectralField>) -> Result<Self> {
        let grid = components
            .first()
            .ok_or_else(|| Error::InvalidVelocity("no components".into()))?
            .grid;
        if components.len() != grid.dim() || components.iter().any(|c| c.grid != grid) {
            return Err(Error::InvalidVelocity(format!(
                "expected {} components on one grid",
                grid.dim()
            )));
        }
        let field = Self { components };
        let scale = field.norm().max(f64::MIN_POSITIVE);
        let mean = field
            .components
            .iter()
            .map(|c| c.coeffs[0].norm())
            .fold(0.0, f64::max);
        if mean > VELOCITY_TOL * scale {
            return Err(Error::InvalidVelocity(format!("nonzero mean {mean:e}")));
        }
        let div = field.divergence_defect();
        if div > VELOCITY_TOL {
            return Err(Error::InvalidVelocity(format!(
                "divergence defect {div:e}"
            )));
        }
        Ok(field)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            components: (0..grid.dim()).map(|_| SpectralField::zeros(grid)).collect(),
        }
    }

    pub(crate) fn from_components_unchecked(components: Vec<SpectralField>) -> Self {
        Self { components }
    }

    pub fn grid(&self) -> Grid {
        self.components[0].grid
    }

    pub fn components(&self) -> &[SpectralField] {
        &self.components
    }

    pub(crate) fn components_mut(&mut self) -> &mut [SpectralField] {
        &mut self.components
    }

    pub fn into_components(self) -> Vec<SpectralField> {
        self.components
    }

    pub fn norm_sq(&self) -> f64 {
        self.components.iter().map(|c| c.norm_sq()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.components.iter().map(|c| c.grad_norm_sq()).sum()
    }

    pub fn inner(&self, other: &VelocityField) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.inner(b))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    /// `max_k |k·u(k)| / |k|` relative to `‖u‖`.
    pub fn divergence_defect(&self) -> f64 {
        let grid = self.grid();
        let dim = grid.dim();
        let scale = self.norm();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 1..grid.len() {
            if grid.is_nyquist(i) {
                continue;
            }
            let k = grid.wavenumber(i);
            let knorm = k[..dim].iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
            let mut dot = Complex64::new(0.0, 0.0);
            for (axis, comp) in self.components.iter().enumerate() {
                dot += comp.coeffs[i] * k[axis] as f64;
            }
            worst = worst.max(dot.norm() / knorm);
        }
        worst / scale
    }

    /// `self += a * other`; stays divergence-free.
    pub fn axpy(&mut self, a: f64, other: &VelocityField) {
        for (c, o) in self.components.iter_mut().zip(&other.components) {
            c.axpy(a, o);
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scaled(s)).collect(),
        }
    }

    pub fn sub(&self, other: &VelocityField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(n: usize) -> Grid {
        Grid::new(2, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(2, 6).is_err());
        assert!(Grid::new(2, 9).is_err());
        assert!(Grid::new(1, 16).is_err());
        assert!(Grid::new(4, 16).is_err());
        assert!(Grid::new(3, 8).is_ok());
    }

    #[test]
    fn quadrature_of_one_is_one() {
        let g = grid2(16);
        let one = SpectralField::constant(g, 1.0);
        assert_eq!(one.to_padded().quadrature(), 1.0);
        assert_eq!(g.spacing().powi(2) * g.len() as f64, 1.0);
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(3, 8).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index_of(g.wavenumber(i)), Some(i));
            let j = g.conjugate_index(i);
            assert_eq!(g.conjugate_index(j), i);
        }
    }

    #[test]
    fn constant_field_has_only_mean() {
        let g = grid2(16);
        let f = SpectralField::to_spectral(&vec![1.0; g.len()], g).unwrap();
        assert!((f.coeffs()[0].re - 1.0).abs() < 1e-15);
        assert!(f.coeffs()[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn cosine_is_two_half_modes() {
        let g = grid2(16);
        let f = SpectralField::from_fn(g, |x| (TWO_PI * x[0]).cos());
        assert!((f.coeff([1, 0, 0]).re - 0.5).abs() < 1e-15);
        assert!((f.coeff([-1, 0, 0]).re - 0.5).abs() < 1e-15);
        let rest: f64 = f.coeffs().iter().map(|c| c.norm()).sum::<f64>() - 1.0;
        assert!(rest.abs() < 1e-14);
    }

    #[test]
    fn size_mismatch_is_error() {
        let g = grid2(8);
        assert!(matches!(
            SpectralField::to_spectral(&[0.0; 10], g),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn to_physical_single_mode() {
        let g = grid2(16);
        let mut f = SpectralField::zeros(g);
        let i = g.index_of([0, 1, 0]).unwrap();
        let j = g.index_of([0, -1, 0]).unwrap();
        f.coeffs_mut()[i] = Complex64::new(0.5, 0.0);
        f.coeffs_mut()[j] = Complex64::new(0.5, 0.0);
        let v = f.to_physical().unwrap();
        for (p, val) in v.iter().enumerate() {
            let x = g.point(p);
            assert!((val - (TWO_PI * x[1]).cos()).abs() < 1e-14);
        }
        let c = SpectralField::constant(g, 3.5).to_physical().unwrap();
        assert!(c.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn to_physical_rejects_non_hermitian() {
        let g = grid2(8);
        let mut f = SpectralField::zeros(g);
        let i = g.index_of([1, 0, 0]).unwrap();
        f.coeffs_mut()[i] = Complex64::new(1.0, 0.0);
        assert!(matches!(f.to_physical(), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn sine_derivatives() {
        let g = grid2(16);
        let s = SpectralField::from_fn(g, |x| (TWO_PI * x[0]).sin());
        let grad = s.gradient();
        let expect = SpectralField::from_fn(g, |x| TWO_PI * (TWO_PI * x[0]).cos());
        assert!(grad[0].sub(&expect).norm() < 1e-13);
        assert!(grad[1].norm() < 1e-15);
        let lap = s.laplacian();
        assert!(lap.sub(&s.scaled(-4.0 * PI * PI)).norm() < 1e-12);
        let c = SpectralField::constant(g, 2.0);
        assert_eq!(c.laplacian().norm(), 0.0);
        assert!(c.gradient().iter().all(|d| d.norm() == 0.0));
    }

    #[test]
    fn leray_single_modes() {
        let g = grid2(16);
        let i = g.index_of([1, 0, 0]).unwrap();
        let ic = g.conjugate_index(i);
        let mut a = SpectralField::zeros(g);
        a.coeffs_mut()[i] = Complex64::new(1.0, 0.0);
        a.coeffs_mut()[ic] = Complex64::new(1.0, 0.0);
        let z = SpectralField::zeros(g);
        let gradient_like = leray_project(&[a.clone(), z.clone()]).unwrap();
        assert_eq!(gradient_like.norm(), 0.0);
        let solenoidal = leray_project(&[z, a.clone()]).unwrap();
        assert_eq!(solenoidal.components()[1], a);
        assert_eq!(solenoidal.components()[0].norm(), 0.0);
    }

    #[test]
    fn truncation_examples() {
        let g = grid2(16);
        let f = SpectralField::from_fn(g, |x| (TWO_PI * 3.0 * x[0]).cos() + x[1]);
        assert_eq!(f.galerkin_truncate(8).unwrap(), f);
        let m = 2;
        let mut single = SpectralField::zeros(g);
        let i = g.index_of([0, 3, 0]).unwrap();
        single.coeffs_mut()[i] = Complex64::new(0.0, -0.5);
        single.coeffs_mut()[g.conjugate_index(i)] = Complex64::new(0.0, 0.5);
        assert_eq!(single.galerkin_truncate(m).unwrap().norm(), 0.0);
        assert!(f.galerkin_truncate(0).is_err());
        assert!(f.galerkin_truncate(9).is_err());
    }

    #[test]
    fn product_of_cosines() {
        let g = grid2(16);
        let c = SpectralField::from_fn(g, |x| (TWO_PI * x[0]).cos());
        let p = dealias_product(&c, &c).unwrap();
        let expect = SpectralField::from_fn(g, |x| 0.5 + 0.5 * (2.0 * TWO_PI * x[0]).cos());
        assert!(p.sub(&expect).max_abs_coeff() < 1e-15);
        let k = SpectralField::constant(g, 3.0);
        let q = dealias_product(&c, &k).unwrap();
        assert!(q.sub(&c.scaled(3.0)).max_abs_coeff() < 1e-15);
    }

    #[test]
    fn velocity_new_validates() {
        let g = grid2(16);
        let ux = SpectralField::from_fn(g, |x| (TWO_PI * x[0]).sin());
        let uy = SpectralField::zeros(g);
        assert!(VelocityField::new(vec![ux.clone(), uy.clone()]).is_err());
        assert!(VelocityField::new(vec![uy.clone(), ux.clone()]).is_ok());
        let shifted = SpectralField::from_fn(g, |x| 1.0 + (TWO_PI * x[0]).sin());
        assert!(VelocityField::new(vec![uy, shifted]).is_err());
    }
}
