//! Harmonic-extension maps `ψ(x) = x + δψ(x) e₂` for a graph interface.
//!
//! `δψ⁺` is the bounded harmonic extension of `h` into `x₂ > 0`, with modes
//! `ĥ(k) e^{−|k̃| x₂}`; the lower map is the reflection
//! `δψ⁻(x₁, x₂) = δψ⁺(x₁, −x₂)`. With `J = 1 + δψ,₂` the inverse gradient is
//!
//! ```text
//!     A = (∇ψ)⁻¹ = 1/J · [  J      0 ]
//!                        [ −δψ,₁   1 ]
//! ```

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;
use crate::spectral::{self, PeriodicGrid, RealField, SpectralField};

/// Default margin for the diffeomorphism check.
pub const DIFFEO_MARGIN: f64 = 1e-3;

/// Geometric depth sampling `0 = x₂⁰ < … < x₂³¹ = L`, refined near the trace.
pub fn default_depths(grid: &PeriodicGrid) -> Vec<f64> {
    geometric_depths(grid.period_length(), 32, 1.2)
}

pub fn geometric_depths(max_depth: f64, levels: usize, ratio: f64) -> Vec<f64> {
    let m = (levels - 1) as i32;
    let denom = ratio.powi(m) - 1.0;
    (0..levels)
        .map(|i| max_depth * (ratio.powi(i as i32) - 1.0) / denom)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfPlaneExtension {
    pub grid: PeriodicGrid,
    /// Distances `|x₂| ≥ 0` from the interface.
    pub depth_levels: Vec<f64>,
    /// Modes `ĥ(k) e^{−|k̃| x₂}` per level.
    pub modal: Vec<SpectralField>,
    trace: SpectralField,
}

pub fn harmonic_extension(h: &RealField, depths: &[f64]) -> Result<HalfPlaneExtension> {
    if depths.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::param("depths", "depths must be finite and non-negative"));
    }
    if depths.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("depths", "depths must be sorted"));
    }
    let grid = *h.grid();
    let trace = spectral::transform(h);
    let modal = par::map_range(depths.len(), |m| damped(&trace, depths[m]));
    Ok(HalfPlaneExtension {
        grid,
        depth_levels: depths.to_vec(),
        modal,
        trace,
    })
}

fn damped(trace: &SpectralField, depth: f64) -> SpectralField {
    let grid = *trace.grid();
    let coeffs = trace
        .coeffs()
        .iter()
        .enumerate()
        .map(|(j, c)| c * (-grid.wavenumber(j).abs() * depth).exp())
        .collect();
    SpectralField::from_coeffs(grid, coeffs)
}

fn with_symbol(s: &SpectralField, symbol: impl Fn(usize, f64) -> Complex64) -> RealField {
    let grid = *s.grid();
    let coeffs = s
        .coeffs()
        .iter()
        .enumerate()
        .map(|(j, c)| c * symbol(j, grid.wavenumber(j)))
        .collect();
    spectral::inverse_transform(&SpectralField::from_coeffs(grid, coeffs))
}

impl HalfPlaneExtension {
    pub fn levels(&self) -> usize {
        self.depth_levels.len()
    }

    /// `δψ⁺(·, depth_levels[m])`.
    pub fn value(&self, m: usize) -> RealField {
        spectral::inverse_transform(&self.modal[m])
    }

    /// `δψ⁺,₁` at level `m` (Nyquist mode dropped).
    pub fn d1(&self, m: usize) -> RealField {
        let grid = self.grid;
        with_symbol(&self.modal[m], |j, k| {
            if grid.is_nyquist(j) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k)
            }
        })
    }

    /// `δψ⁺,₂` at level `m`, modes `−|k̃| ĥ(k) e^{−|k̃| x₂}`.
    pub fn d2(&self, m: usize) -> RealField {
        with_symbol(&self.modal[m], |_, k| Complex64::new(-k.abs(), 0.0))
    }

    /// `δψ⁺` at an arbitrary height `x₂ ≥ 0`, or `δψ⁻` by reflection for
    /// `x₂ < 0`.
    pub fn at_height(&self, x2: f64) -> RealField {
        spectral::inverse_transform(&damped(&self.trace, x2.abs()))
    }

    pub fn trace_spectrum(&self) -> &SpectralField {
        &self.trace
    }
}

/// `∂δψ⁺/∂x₂` on `x₂ = 0`; equals `−Λh`.
pub fn dtn_trace(ext: &HalfPlaneExtension) -> RealField {
    with_symbol(&ext.trace, |_, k| Complex64::new(-k.abs(), 0.0))
}

/// `J` and `A` per sampled level.
#[derive(Debug, Clone, PartialEq)]
pub struct CofactorData {
    pub half: Half,
    pub depth_levels: Vec<f64>,
    pub j: Vec<RealField>,
    /// Row-major entries `[A11, A12, A21, A22]` per level.
    pub a: Vec<[RealField; 4]>,
    /// `∇ψ` entries `[1, 0, δψ,₁, 1 + δψ,₂]` per level, kept for checks.
    pub grad_psi: Vec<[RealField; 4]>,
    pub min_j: f64,
}

pub fn ale_cofactors(ext: &HalfPlaneExtension) -> Result<CofactorData> {
    ale_cofactors_on(ext, Half::Upper)
}

pub fn ale_cofactors_on(ext: &HalfPlaneExtension, half: Half) -> Result<CofactorData> {
    let g = ext.grid;
    let sign = match half {
        Half::Upper => 1.0,
        Half::Lower => -1.0,
    };
    let per_level = par::map_range(ext.levels(), |m| {
        let d1 = ext.d1(m);
        // δψ⁻,₂(x₁, −d) = −δψ⁺,₂(x₁, d).
        let d2 = ext.d2(m).scaled(sign);
        let jac = d2.map(|v| 1.0 + v);
        let inv: Vec<f64> = jac.samples().iter().map(|v| 1.0 / v).collect();
        let a21 = RealField::from_vec_unchecked(g, d1.samples().iter().zip(&inv).map(|(a, b)| -a * b).collect());
        let a22 = RealField::from_vec_unchecked(g, inv);
        let a = [RealField::constant(g, 1.0), RealField::zeros(g), a21, a22];
        let grad = [RealField::constant(g, 1.0), RealField::zeros(g), d1, jac.clone()];
        (jac, a, grad)
    });
    let min_j = per_level.iter().map(|(j, _, _)| j.min()).fold(f64::INFINITY, f64::min);
    if min_j <= 0.0 {
        return Err(Error::DegenerateMap { min_j });
    }
    let mut j = Vec::with_capacity(per_level.len());
    let mut a = Vec::with_capacity(per_level.len());
    let mut grad_psi = Vec::with_capacity(per_level.len());
    for (jj, aa, gg) in per_level {
        j.push(jj);
        a.push(aa);
        grad_psi.push(gg);
    }
    Ok(CofactorData {
        half,
        depth_levels: ext.depth_levels.clone(),
        j,
        a,
        grad_psi,
        min_j,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffeoCheck {
    pub min_j: f64,
    pub ok: bool,
}

/// `min (1 + δψ,₂)` over both halves and all sampled levels.
pub fn diffeomorphism_check(ext: &HalfPlaneExtension) -> DiffeoCheck {
    diffeomorphism_check_with_margin(ext, DIFFEO_MARGIN)
}

pub fn diffeomorphism_check_with_margin(ext: &HalfPlaneExtension, margin: f64) -> DiffeoCheck {
    let mins = par::map_range(ext.levels(), |m| {
        let d2 = ext.d2(m);
        let lo = d2.min();
        let hi = d2.samples().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (1.0 + lo).min(1.0 - hi)
    });
    let min_j = mins.into_iter().fold(f64::INFINITY, f64::min);
    DiffeoCheck {
        min_j,
        ok: min_j > margin,
    }
}
