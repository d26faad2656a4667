//! Two-viscosity interface velocity through the vortex-sheet amplitude `ϖ`.
//!
//! With `⟦f⟧ = f⁺ − f⁻` and `μ̄ = (μ⁺+μ⁻)/2` the amplitude solves
//!
//! `⟦ρ⟧h′ = −⟦μ⟧ u[ϖ]·τ̃ + μ̄ ϖ`,  `τ̃ = (1, h′)`,
//!
//! where `u[ϖ](x) = c_BR p.v.∫ ϖ(β) 𝓑(x, h(x), β, h(β)) dβ` is the
//! Birkhoff–Rott velocity with `𝓑(x, y) = (−(x₂−y₂), x₁−y₁)/|x−y|²` and
//! `c_BR = 1/(2π)`. The interface then moves with `∂ₜh = u·ñ`, `ñ = (−h′, 1)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contour::{FluidParams, Geometry, InterfaceState, PeriodicNodes, QuadratureConfig};
use crate::error::{Error, Result};
use crate::par;
use crate::spectral::{self, OffsetSamples, PeriodicGrid, RealField};

/// Biot–Savart prefactor of the velocity integral.
pub const C_BR: f64 = 1.0 / (2.0 * PI);

/// Sampled vortex-sheet amplitude with its solve history.
#[derive(Debug, Clone, PartialEq)]
pub struct VorticityAmplitude {
    pub omega: RealField,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub used_dense_solve: bool,
}

impl VorticityAmplitude {
    pub fn from_field(omega: RealField) -> Self {
        Self {
            omega,
            iterations: 0,
            residual_history: Vec::new(),
            used_dense_solve: false,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.omega.grid()
    }
}

/// Pointwise value of `𝓑` for a target and a source point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BRKernelEval {
    pub target: [f64; 2],
    pub source: [f64; 2],
    pub value: [f64; 2],
}

impl BRKernelEval {
    pub fn evaluate(target: [f64; 2], source: [f64; 2]) -> Result<Self> {
        let d1 = target[0] - source[0];
        let d2 = target[1] - source[1];
        let r2 = d1 * d1 + d2 * d2;
        if r2 == 0.0 {
            return Err(Error::param("source", "target and source coincide"));
        }
        Ok(Self {
            target,
            source,
            value: [-d2 / r2, d1 / r2],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VorticityConfig {
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    #[serde(default = "default_iters")]
    pub max_iterations: usize,
    #[serde(default = "default_relaxation")]
    pub relaxation: f64,
    /// Largest grid for which the dense solve is attempted after the fixed
    /// point fails.
    #[serde(default = "default_dense")]
    pub dense_fallback_max_n: usize,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_iters() -> usize {
    200
}
fn default_relaxation() -> f64 {
    1.0
}
fn default_dense() -> usize {
    512
}

impl Default for VorticityConfig {
    fn default() -> Self {
        Self {
            tolerance: default_tol(),
            max_iterations: default_iters(),
            relaxation: default_relaxation(),
            dense_fallback_max_n: default_dense(),
        }
    }
}

impl VorticityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be positive"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::param("relaxation", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum SheetGeometry {
    Line { half_width: f64 },
    Periodic { terms: usize },
}

/// Precomputed Birkhoff–Rott quadrature for one grid and geometry.
pub struct BirkhoffRott {
    geometry: SheetGeometry,
    nu: usize,
    periodic: Option<PeriodicNodes>,
    line_nodes: Vec<f64>,
    dy: f64,
}

/// `u·τ̃` and `u·ñ` on the interface.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetVelocity {
    pub tangential: RealField,
    pub normal: RealField,
}

impl BirkhoffRott {
    pub fn new(state: &InterfaceState, params: &FluidParams, q: &QuadratureConfig) -> Result<Self> {
        q.validate()?;
        let grid = state.grid();
        let nu = q.nodes_per_gridpoint;
        let dy = grid.spacing() / nu as f64;
        let geometry = match params.geometry {
            Geometry::DeepLine => SheetGeometry::Line {
                half_width: q.half_width_for(&state.h)?,
            },
            Geometry::DeepPeriodic => SheetGeometry::Periodic {
                terms: q.periodization_terms,
            },
            other => {
                return Err(Error::param(
                    "geometry",
                    format!("vortex-sheet velocity is defined for deep_line and deep_periodic, not {other:?}"),
                ))
            }
        };
        let (periodic, line_nodes) = match geometry {
            SheetGeometry::Periodic { terms } => (Some(PeriodicNodes::new(grid, nu, terms)), Vec::new()),
            SheetGeometry::Line { half_width } => {
                let count = ((half_width / dy) + 0.5).floor().max(1.0) as usize;
                (None, (0..count).map(|j| (j as f64 + 0.5) * dy).collect())
            }
        };
        Ok(Self {
            geometry,
            nu,
            periodic,
            line_nodes,
            dy,
        })
    }

    /// Velocity components of the sheet `ϖ` on the graph of `h`.
    pub fn velocity(&self, h: &RealField, omega: &RealField) -> Result<SheetVelocity> {
        if h.grid() != omega.grid() {
            return Err(Error::FieldMismatch("vorticity and interface grids differ".into()));
        }
        let hp = spectral::derivative(h);
        Ok(self.velocity_with_slope(h, &hp, omega))
    }

    pub(crate) fn velocity_with_slope(&self, h: &RealField, hp: &RealField, omega: &RealField) -> SheetVelocity {
        let n = h.len();
        let hs = h.samples();
        let hps = hp.samples();
        let h_off = OffsetSamples::new(h, self.nu);
        let w_off = OffsetSamples::new(omega, self.nu);
        let pairs: Vec<(f64, f64)> = match self.geometry {
            SheetGeometry::Periodic { .. } => {
                let nodes = self.periodic.as_ref().expect("periodic nodes");
                par::map_range(n, |i| {
                    let (mut ut, mut un) = (0.0, 0.0);
                    for (j, &y) in nodes.nodes.iter().enumerate() {
                        let jp = j as i64;
                        for (s, jj, tail) in [(y, jp, nodes.tails[2 * j]), (-y, -jp - 1, nodes.tails[2 * j + 1])] {
                            let d2 = hs[i] - h_off.periodic(i, jj);
                            let w = w_off.periodic(i, jj);
                            let (odd, even) = nodes.lattice.sums(s, d2, tail);
                            ut += w * (hps[i] * odd - d2 * even);
                            un += w * (odd + d2 * hps[i] * even);
                        }
                    }
                    (C_BR * ut * self.dy, C_BR * un * self.dy)
                })
            }
            SheetGeometry::Line { .. } => par::map_range(n, |i| {
                let (mut ut, mut un) = (0.0, 0.0);
                for (j, &y) in self.line_nodes.iter().enumerate() {
                    let jp = j as i64;
                    for (s, jj) in [(y, jp), (-y, -jp - 1)] {
                        let d2 = hs[i] - h_off.windowed(i, jj);
                        let w = w_off.windowed(i, jj);
                        let r2 = s * s + d2 * d2;
                        ut += w * (hps[i] * s - d2) / r2;
                        un += w * (s + d2 * hps[i]) / r2;
                    }
                }
                (C_BR * ut * self.dy, C_BR * un * self.dy)
            }),
        };
        let grid = *h.grid();
        let (t, nn): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        SheetVelocity {
            tangential: RealField::from_vec_unchecked(grid, t),
            normal: RealField::from_vec_unchecked(grid, nn),
        }
    }
}

fn check_two_phase(params: &FluidParams) -> Result<()> {
    params.validate()?;
    if params.geometry == Geometry::OnePhaseStrip || params.mu_plus <= 0.0 {
        return Err(Error::param("mu_plus", "the vortex-sheet solve needs two viscous phases"));
    }
    let atwood = params.mu_jump().abs() / (params.mu_plus + params.mu_minus);
    if atwood >= 1.0 {
        return Err(Error::param("mu_plus", "viscosity contrast must satisfy |⟦μ⟧|/(μ⁺+μ⁻) < 1"));
    }
    Ok(())
}

/// Fixed-point solve with default iteration settings and tolerance `tol`.
pub fn solve_vorticity_amplitude(
    state: &InterfaceState,
    params: &FluidParams,
    tol: f64,
) -> Result<VorticityAmplitude> {
    let cfg = VorticityConfig {
        tolerance: tol,
        ..Default::default()
    };
    let br = BirkhoffRott::new(state, params, &QuadratureConfig::default())?;
    solve_with(&br, &state.h, params, &cfg, None)
}

/// Solves for `ϖ` on the graph of `h`, optionally warm-started.
pub fn solve_with(
    br: &BirkhoffRott,
    h: &RealField,
    params: &FluidParams,
    cfg: &VorticityConfig,
    guess: Option<&RealField>,
) -> Result<VorticityAmplitude> {
    check_two_phase(params)?;
    cfg.validate()?;
    let hp = spectral::derivative(h);
    let forcing = hp.scaled(params.rho_jump());
    let scale = hp.l2_norm();
    let mu_bar = params.mu_mean();
    let mu_jump = params.mu_jump();
    if scale == 0.0 {
        return Ok(VorticityAmplitude::from_field(RealField::zeros(*h.grid())));
    }
    if mu_jump == 0.0 {
        return Ok(VorticityAmplitude {
            omega: forcing.scaled(1.0 / mu_bar),
            iterations: 1,
            residual_history: vec![0.0],
            used_dense_solve: false,
        });
    }

    let update = |omega: &RealField| -> (RealField, f64) {
        let u = br.velocity_with_slope(h, &hp, omega);
        let target = forcing.add_scaled(&u.tangential, mu_jump).scaled(1.0 / mu_bar);
        let residual = target.sub(omega).l2_norm() * mu_bar / scale;
        (target, residual)
    };

    let mut omega = guess.cloned().unwrap_or_else(|| forcing.scaled(1.0 / mu_bar));
    let mut history = Vec::new();
    for it in 1..=cfg.max_iterations {
        let (target, residual) = update(&omega);
        history.push(residual);
        if residual <= cfg.tolerance {
            return Ok(VorticityAmplitude {
                omega,
                iterations: it,
                residual_history: history,
                used_dense_solve: false,
            });
        }
        if !residual.is_finite() {
            break;
        }
        omega = omega.add_scaled(&target.sub(&omega), cfg.relaxation);
    }

    let last = history.last().copied().unwrap_or(f64::NAN);
    if h.len() <= cfg.dense_fallback_max_n {
        let omega = dense_solve(br, h, params)?;
        let (_, residual) = update(&omega);
        if residual <= cfg.tolerance.max(1e-9) {
            history.push(residual);
            return Ok(VorticityAmplitude {
                omega,
                iterations: cfg.max_iterations,
                residual_history: history,
                used_dense_solve: true,
            });
        }
    }
    Err(Error::ContractionFailure {
        iterations: cfg.max_iterations,
        residual: last,
    })
}

/// Direct solve of `(μ̄ I − ⟦μ⟧ T) ϖ = ⟦ρ⟧ h′`, where `T` is the discrete map
/// `ϖ ↦ u[ϖ]·τ̃` assembled column by column.
pub fn dense_solve(br: &BirkhoffRott, h: &RealField, params: &FluidParams) -> Result<RealField> {
    check_two_phase(params)?;
    let n = h.len();
    let grid = *h.grid();
    let hp = spectral::derivative(h);
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let e = RealField::from_vec_unchecked(grid, e);
            br.velocity_with_slope(h, &hp, &e).tangential.into_samples()
        })
        .collect();
    let (mu_bar, mu_jump) = (params.mu_mean(), params.mu_jump());
    let m = DMatrix::from_fn(n, n, |i, k| {
        let diag = if i == k { mu_bar } else { 0.0 };
        diag - mu_jump * columns[k][i]
    });
    let rhs = DVector::from_iterator(n, hp.samples().iter().map(|v| params.rho_jump() * v));
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::param("vorticity", "dense vortex-sheet system is singular"))?;
    RealField::new(grid, sol.iter().copied().collect())
}

/// `u·ñ` of the sheet `omega` on the interface `state`.
pub fn birkhoff_rott_normal_velocity(
    omega: &VorticityAmplitude,
    state: &InterfaceState,
    params: &FluidParams,
    q: &QuadratureConfig,
) -> Result<RealField> {
    let br = BirkhoffRott::new(state, params, q)?;
    Ok(br.velocity(&state.h, &omega.omega)?.normal)
}

/// Pointwise Rayleigh–Taylor values with their minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct RtReport {
    pub values: RealField,
    pub min: f64,
    pub stable: bool,
}

/// `RT = −⟦μ⟧ u·n − ⟦ρ⟧/√(1+h′²)`.
///
/// `u_normal_tilde` is `u·ñ` with the unnormalized normal `ñ = (−h′, 1)`, as
/// returned by the sheet velocity; it is divided by `√(1+h′²)` here.
pub fn rayleigh_taylor_two_phase(
    state: &InterfaceState,
    u_normal_tilde: &RealField,
    params: &FluidParams,
) -> Result<RtReport> {
    if state.grid() != u_normal_tilde.grid() {
        return Err(Error::FieldMismatch("velocity and interface grids differ".into()));
    }
    let hp = spectral::derivative(&state.h);
    Ok(rt_from_slope(&hp, u_normal_tilde, params))
}

pub(crate) fn rt_from_slope(hp: &RealField, u_normal_tilde: &RealField, params: &FluidParams) -> RtReport {
    let (mu_jump, rho_jump) = (params.mu_jump(), params.rho_jump());
    let values: Vec<f64> = hp
        .samples()
        .iter()
        .zip(u_normal_tilde.samples())
        .map(|(&p, &un)| {
            let norm = (1.0 + p * p).sqrt();
            -mu_jump * un / norm - rho_jump / norm
        })
        .collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    RtReport {
        values: RealField::from_vec_unchecked(*hp.grid(), values),
        min,
        stable: min > 0.0,
    }
}
