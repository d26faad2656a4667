//! Periodic pseudospectral toolbox.
//!
//! Fourier coefficients are normalized so that `f(x) = Σ ĥ(k) e^{i k̃ x}` with
//! physical wavenumbers `k̃ = 2πk/L`; with this convention the continuum L²
//! norm is `(L Σ |ĥ(k)|²)^{1/2}`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Uniform grid on a periodic interval of length `L` with `n` nodes
/// `x_j = j L / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    n_points: usize,
    period_length: f64,
}

impl PeriodicGrid {
    pub fn new(n_points: usize, period_length: f64) -> Result<Self> {
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points} must be a power of two and at least 8"
            )));
        }
        if !(period_length.is_finite() && period_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "period length {period_length} must be positive"
            )));
        }
        Ok(Self {
            n_points,
            period_length,
        })
    }

    /// Grid on `[0, 2π)`.
    pub fn two_pi(n_points: usize) -> Result<Self> {
        Self::new(n_points, 2.0 * PI)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn period_length(&self) -> f64 {
        self.period_length
    }

    pub fn spacing(&self) -> f64 {
        self.period_length / self.n_points as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }

    /// Signed mode index of FFT slot `j`, in `−n/2+1 ..= n/2`.
    pub fn mode_index(&self, j: usize) -> i64 {
        let n = self.n_points as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Physical wavenumber `2πk/L` of FFT slot `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        2.0 * PI * self.mode_index(j) as f64 / self.period_length
    }

    /// Largest represented physical wavenumber (the Nyquist mode).
    pub fn max_wavenumber(&self) -> f64 {
        PI * self.n_points as f64 / self.period_length
    }

    pub(crate) fn is_nyquist(&self, j: usize) -> bool {
        j == self.n_points / 2
    }
}

/// Samples of a real periodic function at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: PeriodicGrid,
    samples: Vec<f64>,
}

impl RealField {
    pub fn new(grid: PeriodicGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.n_points() {
            return Err(Error::FieldMismatch(format!(
                "{} samples for a grid of {} points",
                samples.len(),
                grid.n_points()
            )));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField { index });
        }
        Ok(Self { grid, samples })
    }

    pub(crate) fn from_vec_unchecked(grid: PeriodicGrid, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.n_points());
        Self { grid, samples }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64) -> f64) -> Self {
        let samples = grid.nodes().into_iter().map(f).collect();
        Self { grid, samples }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        Self {
            grid,
            samples: vec![value; grid.n_points()],
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Discrete inner product `h Σ f_j g_j`, the rectangle rule for `∫ f g`.
    pub fn dot(&self, other: &RealField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.grid.spacing()
            * self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Continuum-normalized L² norm, `(h Σ f_j²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> RealField {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        RealField {
            grid: self.grid,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + factor · other`.
    pub fn add_scaled(&self, other: &RealField, factor: f64) -> RealField {
        debug_assert_eq!(self.grid, other.grid);
        RealField {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + factor * b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &RealField) -> RealField {
        self.add_scaled(other, -1.0)
    }

    /// Circular shift by `m` nodes: `out_j = f_{j−m}`, i.e. `f(x − m h)`.
    pub fn shift_nodes(&self, m: i64) -> RealField {
        let n = self.samples.len() as i64;
        let samples = (0..n)
            .map(|j| self.samples[(j - m).rem_euclid(n) as usize])
            .collect();
        RealField {
            grid: self.grid,
            samples,
        }
    }
}

/// Complex Fourier coefficients `ĥ(k)` of a real field, stored in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub(crate) fn from_coeffs(grid: PeriodicGrid, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.n_points());
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of signed mode `k` (`−n/2 < k ≤ n/2`).
    pub fn mode(&self, k: i64) -> Complex64 {
        let n = self.grid.n_points() as i64;
        self.coeffs[k.rem_euclid(n) as usize]
    }

    /// `|ĥ(k)|` for `k = 0 ..= n/2`.
    pub fn amplitudes(&self) -> Vec<f64> {
        (0..=self.grid.n_points() / 2)
            .map(|k| self.coeffs[k].norm())
            .collect()
    }

    /// Checks `ĥ(−k) = conj ĥ(k)` and that the mean and Nyquist
    /// coefficients are real.
    pub fn is_hermitian(&self, tolerance: f64) -> bool {
        let n = self.grid.n_points();
        let scale = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.norm())).max(1e-300);
        let tol = tolerance * scale;
        if self.coeffs[0].im.abs() > tol || self.coeffs[n / 2].im.abs() > tol {
            return false;
        }
        (1..n / 2).all(|k| (self.coeffs[n - k] - self.coeffs[k].conj()).norm() <= tol)
    }
}

pub fn transform(f: &RealField) -> SpectralField {
    let n = f.len();
    let mut buf: Vec<Complex64> = f.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_plan(n).process(&mut buf);
    let inv = 1.0 / n as f64;
    for c in &mut buf {
        *c *= inv;
    }
    SpectralField {
        grid: f.grid,
        coeffs: buf,
    }
}

/// Inverse transform; the imaginary part (which vanishes for Hermitian
/// coefficients) is discarded.
pub fn inverse_transform(s: &SpectralField) -> RealField {
    let mut buf = s.coeffs.clone();
    inverse_plan(buf.len()).process(&mut buf);
    RealField {
        grid: s.grid,
        samples: buf.into_iter().map(|c| c.re).collect(),
    }
}

fn apply_symbol_unchecked(f: &RealField, symbol: impl Fn(usize, f64) -> Complex64) -> RealField {
    let mut s = transform(f);
    for (j, c) in s.coeffs.iter_mut().enumerate() {
        *c *= symbol(j, f.grid.wavenumber(j));
    }
    inverse_transform(&s)
}

/// Fourier multiplier `symbol(k̃) ĥ(k)`.
///
/// Taking the real part of the inverse transform symmetrizes the symbol to
/// `(m(k̃) + conj m(−k̃))/2`, so the output is always real.
pub fn apply_multiplier(f: &RealField, symbol: impl Fn(f64) -> Complex64) -> Result<RealField> {
    let grid = f.grid;
    let values: Vec<Complex64> = (0..grid.n_points()).map(|j| symbol(grid.wavenumber(j))).collect();
    if let Some(j) = values.iter().position(|m| !(m.re.is_finite() && m.im.is_finite())) {
        return Err(Error::InvalidMultiplier {
            wavenumber: grid.wavenumber(j),
        });
    }
    Ok(apply_symbol_unchecked(f, |j, _| values[j]))
}

/// Same as [`apply_multiplier`] for real symbols, without the finiteness
/// check. Used internally where the symbol is known to be bounded.
pub(crate) fn apply_real_symbol(f: &RealField, symbol: impl Fn(f64) -> f64) -> RealField {
    apply_symbol_unchecked(f, |_, k| Complex64::new(symbol(k), 0.0))
}

/// Spectral derivative `∂ₓ f`, with the Nyquist mode zeroed.
pub fn derivative(f: &RealField) -> RealField {
    let grid = f.grid;
    apply_symbol_unchecked(f, |j, k| {
        if grid.is_nyquist(j) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k)
        }
    })
}

/// `f(x − a)` by spectral interpolation.
pub fn shift(f: &RealField, a: f64) -> RealField {
    apply_symbol_unchecked(f, |_, k| Complex64::from_polar(1.0, -k * a))
}

/// `Λ f`, symbol `|k̃|`.
pub fn apply_lambda(f: &RealField) -> RealField {
    apply_real_symbol(f, f64::abs)
}

/// `Λ⁻¹ f` with the default zero-mean tolerance `10⁻¹⁰ · max|f|`.
pub fn apply_lambda_inverse(f: &RealField) -> Result<RealField> {
    apply_lambda_inverse_with_tolerance(f, 1e-10 * f.max_abs())
}

pub fn apply_lambda_inverse_with_tolerance(f: &RealField, tolerance: f64) -> Result<RealField> {
    let mean = f.mean();
    if mean.abs() > tolerance {
        return Err(Error::ZeroMeanViolation { mean, tolerance });
    }
    Ok(apply_real_symbol(f, |k| if k == 0.0 { 0.0 } else { 1.0 / k.abs() }))
}

/// Real-space samples `f(x_i − y)` at the shifted nodes
/// `y_j = (j + ½) h / ν`, shared by every PV quadrature in the crate.
///
/// Node `j` is split as `j = qν + r` so that `x_i − y_j = x_{i−q} − (r+½)h/ν`;
/// the `ν` spectrally shifted copies of `f` then cover all nodes.
pub(crate) struct OffsetSamples {
    nu: usize,
    n: usize,
    copies: Vec<Vec<f64>>,
}

impl OffsetSamples {
    pub(crate) fn new(f: &RealField, nu: usize) -> Self {
        let h = f.grid.spacing();
        let copies = (0..nu)
            .map(|r| shift(f, (r as f64 + 0.5) * h / nu as f64).into_samples())
            .collect();
        Self {
            nu,
            n: f.len(),
            copies,
        }
    }

    #[inline]
    fn split(&self, i: usize, j: i64) -> (i64, usize) {
        let nu = self.nu as i64;
        let q = j.div_euclid(nu);
        let r = j.rem_euclid(nu) as usize;
        (i as i64 - q, r)
    }

    /// `f(x_i − y_j)` for a periodic `f`.
    #[inline]
    pub(crate) fn periodic(&self, i: usize, j: i64) -> f64 {
        let (s, r) = self.split(i, j);
        self.copies[r][s.rem_euclid(self.n as i64) as usize]
    }

    /// `f(x_i − y_j)` with `f = 0` outside the grid window.
    #[inline]
    pub(crate) fn windowed(&self, i: usize, j: i64) -> f64 {
        let (s, r) = self.split(i, j);
        if s < 0 || s >= self.n as i64 {
            0.0
        } else {
            self.copies[r][s as usize]
        }
    }
}

/// `Λ f` from its singular-integral representation
///
/// `Λf(x) = (π/L²) p.v.∫_{−L/2}^{L/2} (f(x) − f(x−s)) / sin²(πs/L) ds`,
///
/// evaluated with the midpoint nodes `s_j = (j+½)L/(2n)`, `j = −n … n−1`.
/// No node sits at `s = 0`; the odd `cot` part of the integrand cancels
/// between `s_j` and `−s_j`.
pub fn apply_lambda_kernel(f: &RealField) -> RealField {
    let grid = f.grid;
    let n = grid.n_points();
    let l = grid.period_length();
    let ds = grid.spacing() / 2.0;
    let samples = OffsetSamples::new(f, 2);
    let weights: Vec<f64> = (0..n)
        .map(|j| {
            let s = (j as f64 + 0.5) * ds;
            1.0 / (PI * s / l).sin().powi(2)
        })
        .collect();
    let prefactor = PI / (l * l) * ds;
    let out = crate::par::map_range(n, |i| {
        let fx = f.samples[i];
        let mut acc = 0.0;
        for (j, w) in weights.iter().enumerate() {
            let j = j as i64;
            let pair = 2.0 * fx - samples.periodic(i, j) - samples.periodic(i, -j - 1);
            acc += pair * w;
        }
        prefactor * acc
    });
    RealField::from_vec_unchecked(grid, out)
}

/// Gaussian mollifier `𝒥_κ`, symbol `e^{−κ²k̃²/2}`.
pub fn mollify(f: &RealField, kappa: f64) -> Result<RealField> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::param("kappa", format!("{kappa} must be positive")));
    }
    Ok(apply_real_symbol(f, |k| (-0.5 * kappa * kappa * k * k).exp()))
}

/// Sobolev index `s ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SobolevExponent(f64);

impl SobolevExponent {
    pub fn new(s: f64) -> Result<Self> {
        if s.is_finite() && s >= 0.0 {
            Ok(Self(s))
        } else {
            Err(Error::param("s", format!("Sobolev exponent {s} must be finite and non-negative")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SobolevExponent {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        Self::new(s)
    }
}

impl From<SobolevExponent> for f64 {
    fn from(s: SobolevExponent) -> f64 {
        s.0
    }
}

/// Bessel-potential norm `(L Σ (1+k̃²)^s |ĥ(k)|²)^{1/2}`.
pub fn sobolev_norm(f: &RealField, s: SobolevExponent) -> f64 {
    sobolev_norm_of_spectrum(&transform(f), s.value())
}

pub(crate) fn sobolev_norm_of_spectrum(spec: &SpectralField, s: f64) -> f64 {
    let grid = spec.grid;
    let sum: f64 = spec
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let k = grid.wavenumber(j);
            (1.0 + k * k).powf(s) * c.norm_sqr()
        })
        .sum();
    (grid.period_length() * sum).sqrt()
}

/// `e^{−tΛ} f`, symbol `e^{−t|k̃|}`.
pub fn apply_semigroup(f: &RealField, t: f64) -> Result<RealField> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::param("t", format!("{t} must be non-negative")));
    }
    Ok(apply_real_symbol(f, |k| (-t * k.abs()).exp()))
}
