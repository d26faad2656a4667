//! Right-hand sides of the contour equations for a graph interface
//! `Γ(t) = (x, h(x, t))`.
//!
//! Three kernels are provided:
//!
//! * the infinitely deep line,
//!   `∂ₜh = p.v.∫_ℝ (h′(x)−h′(x−y)) y / (y² + (h(x)−h(x−y))²) dy`;
//! * the confined strip, with the kernels `sinh y/(cosh y − cos(h(x)−h(x−y)))`
//!   and `sinh y/(cosh y + cos(h(x)+h(x−y)))`;
//! * a lattice-sum periodization of the deep kernel for the torus.
//!
//! All integrals use the shifted midpoint nodes `y_j = (j+½) h / ν`; no node
//! coincides with `y = 0` and the `±y_j` pairs are summed together so odd
//! integrands cancel exactly. Line geometries treat `h` as zero outside the
//! grid window.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::spectral::{self, OffsetSamples, PeriodicGrid, RealField};

/// Edge values of `h` and `h′` above this are a support violation on the
/// line geometries.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// Amplitude bound for the confined kernel.
pub const CONFINED_AMPLITUDE_LIMIT: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    DeepLine,
    ConfinedStrip,
    DeepPeriodic,
    OnePhaseStrip,
}

/// Physical constants of the two fluids. `+` is the upper fluid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidParams {
    #[serde(default = "one")]
    pub mu_plus: f64,
    #[serde(default = "one")]
    pub mu_minus: f64,
    #[serde(default)]
    pub rho_plus: f64,
    #[serde(default = "two")]
    pub rho_minus: f64,
    #[serde(default = "default_geometry")]
    pub geometry: Geometry,
    #[serde(default = "minus_one")]
    pub c_b: f64,
    #[serde(default = "one")]
    pub c_t: f64,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn minus_one() -> f64 {
    -1.0
}
fn default_geometry() -> Geometry {
    Geometry::DeepPeriodic
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            mu_plus: 1.0,
            mu_minus: 1.0,
            rho_plus: 0.0,
            rho_minus: 2.0,
            geometry: Geometry::DeepPeriodic,
            c_b: -1.0,
            c_t: 1.0,
        }
    }
}

impl FluidParams {
    /// One-phase fluid below vacuum with `(μ⁻, ρ⁻) = (1, 1)`.
    pub fn one_phase(c_b: f64) -> Self {
        Self {
            mu_plus: 0.0,
            mu_minus: 1.0,
            rho_plus: 0.0,
            rho_minus: 1.0,
            geometry: Geometry::OnePhaseStrip,
            c_b,
            c_t: 1.0,
        }
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mu_plus,
            self.mu_minus,
            self.rho_plus,
            self.rho_minus,
            self.c_b,
            self.c_t,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("fluid", "all fluid parameters must be finite"));
        }
        if self.mu_minus <= 0.0 {
            return Err(Error::param("mu_minus", "mu_minus must be positive"));
        }
        if self.geometry != Geometry::OnePhaseStrip && self.mu_plus <= 0.0 {
            return Err(Error::param(
                "mu_plus",
                "mu_plus must be positive for two-phase geometries",
            ));
        }
        if self.mu_plus < 0.0 {
            return Err(Error::param("mu_plus", "mu_plus must be non-negative"));
        }
        if self.rho_plus < 0.0 {
            return Err(Error::param("rho_plus", "rho_plus must be non-negative"));
        }
        if self.c_b >= 0.0 {
            return Err(Error::param("c_b", "bottom c_b must be negative"));
        }
        if self.c_t <= 0.0 {
            return Err(Error::param("c_t", "top c_t must be positive"));
        }
        Ok(())
    }

    /// `⟦μ⟧ = μ⁺ − μ⁻`.
    pub fn mu_jump(&self) -> f64 {
        self.mu_plus - self.mu_minus
    }

    /// `⟦ρ⟧ = ρ⁺ − ρ⁻`.
    pub fn rho_jump(&self) -> f64 {
        self.rho_plus - self.rho_minus
    }

    /// `(μ⁺ + μ⁻)/2`.
    pub fn mu_mean(&self) -> f64 {
        0.5 * (self.mu_plus + self.mu_minus)
    }

    /// Lighter fluid on top.
    pub fn is_stable_configuration(&self) -> bool {
        self.rho_jump() < 0.0
    }
}

/// Height samples at a time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceState {
    pub h: RealField,
    pub time: f64,
}

impl InterfaceState {
    pub fn new(h: RealField, time: f64) -> Result<Self> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::param("time", "time must be finite and non-negative"));
        }
        if let Some(index) = h.samples().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteField { index });
        }
        Ok(Self { h, time })
    }

    pub fn at_rest(grid: PeriodicGrid) -> Self {
        Self {
            h: RealField::zeros(grid),
            time: 0.0,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.h.grid()
    }

    /// Checks `min h > c_b` for the one-phase strip.
    pub fn check_above_bottom(&self, c_b: f64) -> Result<()> {
        let min_h = self.h.min();
        if min_h <= c_b {
            return Err(Error::InterfaceTouchesBottom { min_h, c_b });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Half-width of the `y` window on the line geometries. `None` picks
    /// `max(L, 10 × support radius)`.
    #[serde(default)]
    pub truncation_half_width: Option<f64>,
    #[serde(default = "default_nodes")]
    pub nodes_per_gridpoint: usize,
    #[serde(default = "default_terms")]
    pub periodization_terms: usize,
}

fn default_nodes() -> usize {
    1
}
fn default_terms() -> usize {
    4
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            truncation_half_width: None,
            nodes_per_gridpoint: 1,
            periodization_terms: 4,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_gridpoint == 0 {
            return Err(Error::param("nodes_per_gridpoint", "must be positive"));
        }
        if self.periodization_terms == 0 {
            return Err(Error::param("periodization_terms", "must be positive"));
        }
        if let Some(w) = self.truncation_half_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::param("truncation_half_width", "must be positive"));
            }
        }
        Ok(())
    }

    pub(crate) fn half_width_for(&self, h: &RealField) -> Result<f64> {
        let radius = support_radius(h);
        match self.truncation_half_width {
            Some(w) if w < 10.0 * radius => Err(Error::param(
                "truncation_half_width",
                format!("{w} is below 10 × support radius {radius}"),
            )),
            Some(w) => Ok(w),
            None => Ok(h.grid().period_length().max(10.0 * radius)),
        }
    }
}

/// Half the length of the window segment where `|h|` exceeds
/// [`SUPPORT_THRESHOLD`].
pub fn support_radius(h: &RealField) -> f64 {
    let s = h.samples();
    let first = s.iter().position(|v| v.abs() > SUPPORT_THRESHOLD);
    let last = s.iter().rposition(|v| v.abs() > SUPPORT_THRESHOLD);
    match (first, last) {
        (Some(a), Some(b)) => 0.5 * (b - a + 1) as f64 * h.grid().spacing(),
        _ => 0.0,
    }
}

fn check_support(h: &RealField, hp: &RealField) -> Result<()> {
    let n = h.len();
    let edge = [0, 1, n - 2, n - 1]
        .iter()
        .map(|&i| h.samples()[i].abs().max(hp.samples()[i].abs()))
        .fold(0.0_f64, f64::max);
    if edge > SUPPORT_THRESHOLD {
        return Err(Error::SupportViolation {
            edge_value: edge,
            threshold: SUPPORT_THRESHOLD,
        });
    }
    Ok(())
}

fn check_confined_amplitude(h: &RealField) -> Result<()> {
    let amplitude = h.max_abs();
    if amplitude >= CONFINED_AMPLITUDE_LIMIT {
        return Err(Error::AmplitudeViolation {
            amplitude,
            limit: CONFINED_AMPLITUDE_LIMIT,
        });
    }
    Ok(())
}

fn require_geometry(params: &FluidParams, expected: Geometry) -> Result<()> {
    if params.geometry != expected {
        return Err(Error::param(
            "geometry",
            format!("expected {expected:?}, got {:?}", params.geometry),
        ));
    }
    Ok(())
}

/// Midpoint PV sum `Δ Σ g(y_j)` over nodes symmetric about `0`.
///
/// `samples[J + j]` holds `g(y_j)` for `j = −J … J−1`; each pair
/// `g(y_j) + g(−y_j)` is formed before accumulation, so odd integrands
/// integrate to exactly zero.
pub fn pv_integrate(samples: &[f64], spacing: f64) -> Result<f64> {
    if !samples.len().is_multiple_of(2) {
        return Err(Error::param("samples", "node count must be even"));
    }
    let half = samples.len() / 2;
    let sum: f64 = (0..half)
        .map(|j| samples[half + j] + samples[half - 1 - j])
        .sum();
    Ok(sum * spacing)
}

/// Shared evaluation of the line kernels.
struct LineQuadrature {
    h: OffsetSamples,
    hp: OffsetSamples,
    nodes: Vec<f64>,
    dy: f64,
}

impl LineQuadrature {
    fn new(h: &RealField, hp: &RealField, half_width: f64, nu: usize) -> Self {
        let dy = h.grid().spacing() / nu as f64;
        let count = ((half_width / dy) + 0.5).floor().max(1.0) as usize;
        let nodes = (0..count).map(|j| (j as f64 + 0.5) * dy).collect();
        Self {
            h: OffsetSamples::new(h, nu),
            hp: OffsetSamples::new(hp, nu),
            nodes,
            dy,
        }
    }

    /// `Σ_j [g(i, y_j, h(x−y_j), h′(x−y_j)) + g(i, −y_j, …)] Δy` for every
    /// target node `i`.
    fn integrate<G>(&self, n: usize, g: G) -> Vec<f64>
    where
        G: Fn(usize, f64, f64, f64) -> f64 + Sync + Send,
    {
        par::map_range(n, |i| {
            let mut acc = 0.0;
            for (j, &y) in self.nodes.iter().enumerate() {
                let jp = j as i64;
                let jm = -jp - 1;
                let plus = g(i, y, self.h.windowed(i, jp), self.hp.windowed(i, jp));
                let minus = g(i, -y, self.h.windowed(i, jm), self.hp.windowed(i, jm));
                acc += plus + minus;
            }
            acc * self.dy
        })
    }
}

/// Deep, unconfined line.
pub fn rhs_deep_line(state: &InterfaceState, q: &QuadratureConfig) -> Result<RealField> {
    q.validate()?;
    let hp = spectral::derivative(&state.h);
    check_support(&state.h, &hp)?;
    let w = q.half_width_for(&state.h)?;
    Ok(deep_line_unchecked(&state.h, &hp, w, q.nodes_per_gridpoint))
}

pub(crate) fn deep_line_unchecked(h: &RealField, hp: &RealField, half_width: f64, nu: usize) -> RealField {
    let quad = LineQuadrature::new(h, hp, half_width, nu);
    let hs = h.samples();
    let hps = hp.samples();
    let out = quad.integrate(h.len(), |i, y, hy, hpy| {
        let d = hs[i] - hy;
        (hps[i] - hpy) * y / (y * y + d * d)
    });
    RealField::from_vec_unchecked(*h.grid(), out)
}

/// Deep line with the geometry of `params` checked.
pub fn rhs_deep_line_for(state: &InterfaceState, params: &FluidParams, q: &QuadratureConfig) -> Result<RealField> {
    require_geometry(params, Geometry::DeepLine)?;
    rhs_deep_line(state, q)
}

#[inline]
fn confined_minus_kernel(y: f64, d: f64) -> f64 {
    let ay = y.abs();
    if ay < 1.0 {
        let sh = (0.5 * y).sinh();
        let sd = (0.5 * d).sin();
        y.sinh() / (2.0 * sh * sh + 2.0 * sd * sd)
    } else {
        let e = (-ay).exp();
        y.signum() * (1.0 - e * e) / (1.0 + e * e - 2.0 * e * d.cos())
    }
}

#[inline]
fn confined_plus_kernel(y: f64, s: f64) -> f64 {
    let ay = y.abs();
    if ay < 1.0 {
        let ch = (0.5 * y).cosh();
        let ss = (0.5 * s).sin();
        y.sinh() / (2.0 * ch * ch - 2.0 * ss * ss)
    } else {
        let e = (-ay).exp();
        y.signum() * (1.0 - e * e) / (1.0 + e * e + 2.0 * e * s.cos())
    }
}

/// Confined strip.
pub fn rhs_confined_strip(state: &InterfaceState, q: &QuadratureConfig) -> Result<RealField> {
    q.validate()?;
    check_confined_amplitude(&state.h)?;
    let hp = spectral::derivative(&state.h);
    check_support(&state.h, &hp)?;
    let w = q.half_width_for(&state.h)?;
    Ok(confined_unchecked(&state.h, &hp, w, q.nodes_per_gridpoint))
}

pub fn rhs_confined_strip_for(
    state: &InterfaceState,
    params: &FluidParams,
    q: &QuadratureConfig,
) -> Result<RealField> {
    require_geometry(params, Geometry::ConfinedStrip)?;
    rhs_confined_strip(state, q)
}

pub(crate) fn confined_unchecked(h: &RealField, hp: &RealField, half_width: f64, nu: usize) -> RealField {
    let quad = LineQuadrature::new(h, hp, half_width, nu);
    let hs = h.samples();
    let hps = hp.samples();
    let out = quad.integrate(h.len(), |i, y, hy, hpy| {
        (hps[i] - hpy) * confined_minus_kernel(y, hs[i] - hy)
            + (hps[i] + hpy) * confined_plus_kernel(y, hs[i] + hy)
    });
    RealField::from_vec_unchecked(*h.grid(), out)
}

/// Periodized Cauchy-type sums over the lattice `y + mL`, `|m| ≤ M`, with
/// the `δ`-free remainder of the infinite sums added in closed form:
///
/// * `Σ_m 1/(y+mL) = (π/L) cot(πy/L)`,
/// * `Σ_m 1/(y+mL)² = (π/L)² / sin²(πy/L)`.
#[derive(Debug, Clone)]
pub(crate) struct Lattice {
    pub(crate) period: f64,
    pub(crate) terms: usize,
}

impl Lattice {
    /// Remainders `(Σ_{|m|>M} 1/(y+mL), Σ_{|m|>M} 1/(y+mL)²)`.
    pub(crate) fn tails(&self, y: f64) -> (f64, f64) {
        let l = self.period;
        let arg = PI * y / l;
        let mut first = PI / l / arg.tan();
        let mut second = (PI / l).powi(2) / arg.sin().powi(2);
        let m = self.terms as i64;
        for k in -m..=m {
            let ym = y + k as f64 * l;
            first -= 1.0 / ym;
            second -= 1.0 / (ym * ym);
        }
        (first, second)
    }

    /// `(Σ_m (y+mL)/((y+mL)²+δ²), Σ_m 1/((y+mL)²+δ²))` with tails.
    #[inline]
    pub(crate) fn sums(&self, y: f64, delta: f64, tails: (f64, f64)) -> (f64, f64) {
        let m = self.terms as i64;
        let d2 = delta * delta;
        let mut odd = tails.0;
        let mut even = tails.1;
        for k in -m..=m {
            let ym = y + k as f64 * self.period;
            let r2 = ym * ym + d2;
            odd += ym / r2;
            even += 1.0 / r2;
        }
        (odd, even)
    }
}

/// `y`-nodes over one period, `y_j = (j+½)h/ν` for `j = −nν/2 … nν/2 − 1`,
/// with their lattice tails.
pub(crate) struct PeriodicNodes {
    pub(crate) nodes: Vec<f64>,
    pub(crate) tails: Vec<(f64, f64)>,
    pub(crate) dy: f64,
    pub(crate) lattice: Lattice,
}

impl PeriodicNodes {
    pub(crate) fn new(grid: &PeriodicGrid, nu: usize, terms: usize) -> Self {
        let dy = grid.spacing() / nu as f64;
        let count = grid.n_points() * nu / 2;
        let lattice = Lattice {
            period: grid.period_length(),
            terms,
        };
        let nodes: Vec<f64> = (0..count).map(|j| (j as f64 + 0.5) * dy).collect();
        let tails = nodes
            .iter()
            .flat_map(|&y| [lattice.tails(y), lattice.tails(-y)])
            .collect();
        Self {
            nodes,
            tails,
            dy,
            lattice,
        }
    }
}

/// Deep kernel periodized over the lattice of periods.
pub fn rhs_deep_periodic(state: &InterfaceState, q: &QuadratureConfig) -> Result<RealField> {
    q.validate()?;
    let hp = spectral::derivative(&state.h);
    let nodes = PeriodicNodes::new(state.grid(), q.nodes_per_gridpoint, q.periodization_terms);
    Ok(deep_periodic_with(&state.h, &hp, &nodes, q.nodes_per_gridpoint))
}

pub fn rhs_deep_periodic_for(
    state: &InterfaceState,
    params: &FluidParams,
    q: &QuadratureConfig,
) -> Result<RealField> {
    require_geometry(params, Geometry::DeepPeriodic)?;
    rhs_deep_periodic(state, q)
}

pub(crate) fn deep_periodic_with(h: &RealField, hp: &RealField, nodes: &PeriodicNodes, nu: usize) -> RealField {
    let hs_off = OffsetSamples::new(h, nu);
    let hp_off = OffsetSamples::new(hp, nu);
    let hs = h.samples();
    let hps = hp.samples();
    let out = par::map_range(h.len(), |i| {
        let mut acc = 0.0;
        for (j, &y) in nodes.nodes.iter().enumerate() {
            let jp = j as i64;
            let jm = -jp - 1;
            let dp = hs[i] - hs_off.periodic(i, jp);
            let dm = hs[i] - hs_off.periodic(i, jm);
            let kp = nodes.lattice.sums(y, dp, nodes.tails[2 * j]).0;
            let km = nodes.lattice.sums(-y, dm, nodes.tails[2 * j + 1]).0;
            acc += (hps[i] - hp_off.periodic(i, jp)) * kp + (hps[i] - hp_off.periodic(i, jm)) * km;
        }
        acc * nodes.dy
    });
    RealField::from_vec_unchecked(*h.grid(), out)
}

/// Which contour kernel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourKernel {
    DeepLine,
    ConfinedStrip,
    DeepPeriodic,
}

impl ContourKernel {
    pub fn evaluate(self, state: &InterfaceState, q: &QuadratureConfig) -> Result<RealField> {
        match self {
            ContourKernel::DeepLine => rhs_deep_line(state, q),
            ContourKernel::ConfinedStrip => rhs_confined_strip(state, q),
            ContourKernel::DeepPeriodic => rhs_deep_periodic(state, q),
        }
    }

    pub fn is_line(self) -> bool {
        !matches!(self, ContourKernel::DeepPeriodic)
    }
}

/// Precomputed evaluator used inside time loops; the support check of the
/// line kernels is applied only when the evaluator is built.
pub(crate) struct ContourEvaluator {
    kernel: ContourKernel,
    nu: usize,
    half_width: f64,
    periodic: Option<PeriodicNodes>,
}

impl ContourEvaluator {
    pub(crate) fn new(kernel: ContourKernel, initial: &InterfaceState, q: &QuadratureConfig) -> Result<Self> {
        q.validate()?;
        kernel.evaluate(initial, q)?;
        let half_width = if kernel.is_line() { q.half_width_for(&initial.h)? } else { 0.0 };
        let periodic = (kernel == ContourKernel::DeepPeriodic)
            .then(|| PeriodicNodes::new(initial.grid(), q.nodes_per_gridpoint, q.periodization_terms));
        Ok(Self {
            kernel,
            nu: q.nodes_per_gridpoint,
            half_width,
            periodic,
        })
    }

    pub(crate) fn eval(&self, h: &RealField) -> Result<RealField> {
        let hp = spectral::derivative(h);
        Ok(match self.kernel {
            ContourKernel::DeepLine => deep_line_unchecked(h, &hp, self.half_width, self.nu),
            ContourKernel::ConfinedStrip => {
                check_confined_amplitude(h)?;
                confined_unchecked(h, &hp, self.half_width, self.nu)
            }
            ContourKernel::DeepPeriodic => {
                deep_periodic_with(h, &hp, self.periodic.as_ref().expect("periodic nodes"), self.nu)
            }
        })
    }
}

/// Measured linear symbol `m(k̃)` of a kernel, defined by
/// `rhs(εφ)/ε ≈ −m(k̃) φ̂` as `ε → 0`.
///
/// On the periodic kernel each mode is probed with `ε cos(k̃x)`; on the line
/// kernels a Gaussian bump centred in the window is used and the symbol is
/// read off mode by mode from the ratio of Fourier coefficients. Returns
/// `(k̃, m(k̃))` for the requested signed mode indices.
pub fn measure_linear_symbol(
    kernel: ContourKernel,
    grid: PeriodicGrid,
    q: &QuadratureConfig,
    modes: &[usize],
    epsilon: f64,
) -> Result<Vec<(f64, f64)>> {
    let kk = 2.0 * PI / grid.period_length();
    if kernel == ContourKernel::DeepPeriodic {
        modes
            .iter()
            .map(|&k| {
                let phi = RealField::from_fn(grid, |x| (k as f64 * kk * x).cos());
                let state = InterfaceState::new(phi.scaled(epsilon), 0.0)?;
                let out = rhs_deep_periodic(&state, q)?.scaled(1.0 / epsilon);
                Ok((k as f64 * kk, -out.dot(&phi) / phi.dot(&phi)))
            })
            .collect()
    } else {
        let l = grid.period_length();
        let width = (4.0 * grid.spacing()).max(l / 64.0);
        let bump = RealField::from_fn(grid, |x| (-((x - 0.5 * l) / width).powi(2)).exp());
        let state = InterfaceState::new(bump.scaled(epsilon), 0.0)?;
        let out = kernel.evaluate(&state, q)?.scaled(1.0 / epsilon);
        let (b, o) = (spectral::transform(&bump), spectral::transform(&out));
        Ok(modes
            .iter()
            .map(|&k| {
                let ratio = o.coeffs()[k] / b.coeffs()[k];
                (k as f64 * kk, -ratio.re)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line_grid(n: usize, l: f64) -> PeriodicGrid {
        PeriodicGrid::new(n, l).unwrap()
    }

    fn bump(grid: PeriodicGrid, width: f64, amplitude: f64) -> RealField {
        let c = 0.5 * grid.period_length();
        RealField::from_fn(grid, |x| amplitude * (-((x - c) / width).powi(2)).exp())
    }

    fn state(h: RealField) -> InterfaceState {
        InterfaceState::new(h, 0.0).unwrap()
    }

    fn rel_l2(a: &RealField, b: &RealField) -> f64 {
        a.sub(b).l2_norm() / b.l2_norm()
    }

    /// `Λ` of a window function on the real line, approximated by the
    /// multiplier on a zero-padded window 16 times longer.
    fn line_lambda(h: &RealField) -> RealField {
        let n = h.len();
        let pad = 16;
        let big = line_grid(n * pad, h.grid().period_length() * pad as f64);
        let offset = n * pad / 2 - n / 2;
        let mut v = vec![0.0; n * pad];
        v[offset..offset + n].copy_from_slice(h.samples());
        let lam = spectral::apply_lambda(&RealField::new(big, v).unwrap());
        RealField::new(*h.grid(), lam.samples()[offset..offset + n].to_vec()).unwrap()
    }

    #[test]
    fn zero_state_gives_zero_rhs() {
        let q = QuadratureConfig::default();
        let g = line_grid(64, 16.0);
        for k in [ContourKernel::DeepLine, ContourKernel::ConfinedStrip, ContourKernel::DeepPeriodic] {
            let out = k.evaluate(&InterfaceState::at_rest(g), &q).unwrap();
            assert_eq!(out.max_abs(), 0.0, "{k:?}");
        }
    }

    #[test]
    fn pv_integrate_examples() {
        let n = 1000;
        let dy = 1.0 / n as f64;
        let odd: Vec<f64> = (-(n as i64)..n as i64).map(|j| 1.0 / ((j as f64 + 0.5) * dy)).collect();
        assert_eq!(pv_integrate(&odd, dy).unwrap(), 0.0);

        let n = 500_000;
        let dy = 1.0 / n as f64;
        let sq: Vec<f64> = (-(n as i64)..n as i64).map(|j| ((j as f64 + 0.5) * dy).powi(2)).collect();
        assert!((pv_integrate(&sq, dy).unwrap() - 2.0 / 3.0).abs() < 1e-9);

        assert!(pv_integrate(&[1.0, 2.0, 3.0], 0.1).is_err());
    }

    /// Adaptive Simpson quadrature, independent of the midpoint rule.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn pv_integrate_sinc_matches_adaptive_quadrature() {
        let sinc = |y: f64| if y == 0.0 { 1.0 } else { y.sin() / y };
        let oracle = adaptive_simpson(&sinc, -PI, PI, 1e-13);
        let n = 20_000;
        let dy = PI / n as f64;
        let samples: Vec<f64> = (-(n as i64)..n as i64).map(|j| sinc((j as f64 + 0.5) * dy)).collect();
        assert!((pv_integrate(&samples, dy).unwrap() - oracle).abs() < 1e-8);
        // 2 Si(π)
        assert!((oracle - 3.703_874_103_010_4).abs() < 1e-9);
    }

    #[test]
    fn deep_line_linearizes_to_minus_pi_lambda() {
        let g = line_grid(512, 64.0);
        let q = QuadratureConfig::default();
        let b = bump(g, 1.0, 1.0);
        let oracle = line_lambda(&b).scaled(-PI);
        let mut errs = vec![];
        for eps in [1e-5, 5e-6] {
            let out = rhs_deep_line(&state(b.scaled(eps)), &q).unwrap().scaled(1.0 / eps);
            errs.push(rel_l2(&out, &oracle));
        }
        assert!(errs[0] <= 1e-3, "{errs:?}");
        assert!(errs[1] <= 1e-3, "{errs:?}");
    }

    #[test]
    fn line_support_violation() {
        let g = line_grid(64, 8.0);
        let h = RealField::from_fn(g, |x| 0.01 * (x * PI / 4.0).cos());
        let err = rhs_deep_line(&state(h.clone()), &QuadratureConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SupportViolation { .. }));
        let err = rhs_confined_strip(&state(h), &QuadratureConfig::default()).unwrap_err();
        assert!(matches!(err, Error::SupportViolation { .. }));
    }

    #[test]
    fn explicit_truncation_must_cover_support() {
        let g = line_grid(256, 32.0);
        let q = QuadratureConfig {
            truncation_half_width: Some(5.0),
            ..Default::default()
        };
        let err = rhs_deep_line(&state(bump(g, 1.0, 0.01)), &q).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "truncation_half_width", .. }));
    }

    #[test]
    fn confined_amplitude_guard() {
        let g = line_grid(128, 32.0);
        let err = rhs_confined_strip(&state(bump(g, 1.0, 1.6)), &QuadratureConfig::default()).unwrap_err();
        assert!(matches!(err, Error::AmplitudeViolation { .. }));
    }

    #[test]
    fn confined_kernels_match_direct_formula() {
        for &(y, d) in &[(0.3f64, 0.2f64), (-0.7, 1.1), (2.5, 0.4), (-5.0, 1.4), (0.01, 0.0)] {
            let direct_minus = y.sinh() / (y.cosh() - d.cos());
            let direct_plus = y.sinh() / (y.cosh() + d.cos());
            assert!((confined_minus_kernel(y, d) - direct_minus).abs() < 1e-10 * direct_minus.abs().max(1.0));
            assert!((confined_plus_kernel(y, d) - direct_plus).abs() < 1e-12 * direct_plus.abs().max(1.0));
        }
    }

    #[test]
    fn confined_linearization_is_reproducible() {
        let g = line_grid(256, 32.0);
        let q = QuadratureConfig::default();
        let modes = [4, 8, 16];
        let a = measure_linear_symbol(ContourKernel::ConfinedStrip, g, &q, &modes, 1e-4).unwrap();
        let b = measure_linear_symbol(ContourKernel::ConfinedStrip, g, &q, &modes, 1e-5).unwrap();
        for ((k, ma), (_, mb)) in a.iter().zip(&b) {
            assert!(*ma > 0.0);
            assert!((ma - mb).abs() <= 1e-2 * mb.abs(), "k = {k}: {ma} vs {mb}");
            // Hilbert-type closed form of the linearized strip kernels.
            let analytic = 2.0 * PI * k * (0.5 * PI * k).tanh();
            assert!((mb - analytic).abs() <= 1e-3 * analytic, "k = {k}: {mb} vs {analytic}");
        }
    }

    #[test]
    fn deep_periodic_linearization() {
        let g = PeriodicGrid::two_pi(64).unwrap();
        let q = QuadratureConfig::default();
        for k in [1.0, 2.0, 4.0] {
            let phi = RealField::from_fn(g, |x| (k * x).cos());
            let out = rhs_deep_periodic(&state(phi.scaled(1e-5)), &q).unwrap().scaled(1e5);
            assert!(rel_l2(&out, &phi.scaled(-PI * k)) <= 1e-3);
        }
    }

    #[test]
    fn periodic_matches_line_on_long_period() {
        let g = line_grid(1024, 100.0);
        let b = bump(g, 1.0, 1e-2);
        let q = QuadratureConfig::default();
        let line = rhs_deep_line(&state(b.clone()), &q).unwrap();
        let per = rhs_deep_periodic(&state(b), &q).unwrap();
        // Images at distance L contribute O(∫h / L²) everywhere in the window.
        assert!(rel_l2(&per, &line) <= 5e-3, "{}", rel_l2(&per, &line));

        // A zero-mean bump has only dipole images, O(L⁻³).
        let c = 50.0;
        let d = RealField::from_fn(g, |x| 1e-2 * (x - c) * (-(x - c).powi(2)).exp());
        let line = rhs_deep_line(&state(d.clone()), &q).unwrap();
        let per = rhs_deep_periodic(&state(d), &q).unwrap();
        assert!(rel_l2(&per, &line) <= 1e-3, "{}", rel_l2(&per, &line));
    }

    #[test]
    fn lattice_tail_reproduces_cotangent_sum() {
        let lat = Lattice { period: 2.0 * PI, terms: 3 };
        let y = 0.7;
        let (odd, even) = lat.sums(y, 0.0, lat.tails(y));
        assert!((odd - 0.5 / (0.5 * y).tan()).abs() < 1e-13);
        assert!((even - 0.25 / (0.5 * y).sin().powi(2)).abs() < 1e-12);
        // Brute force partial sums approach the same limit.
        let brute: f64 = (-200_000i64..=200_000).map(|m| 1.0 / (y + m as f64 * 2.0 * PI)).sum();
        assert!((brute - odd).abs() < 1e-5);
    }

    #[test]
    fn refinement_of_nodes_changes_little() {
        let g = PeriodicGrid::two_pi(64).unwrap();
        let h = RealField::from_fn(g, |x| 0.05 * x.sin() + 0.02 * (2.0 * x).cos());
        let q1 = QuadratureConfig::default();
        let q2 = QuadratureConfig { nodes_per_gridpoint: 2, ..q1 };
        let a = rhs_deep_periodic(&state(h.clone()), &q1).unwrap();
        let b = rhs_deep_periodic(&state(h), &q2).unwrap();
        assert!(rel_l2(&a, &b) <= 1e-4);

        let lg = line_grid(256, 32.0);
        let hb = bump(lg, 1.0, 0.05);
        let a = rhs_confined_strip(&state(hb.clone()), &q1).unwrap();
        let b = rhs_confined_strip(&state(hb), &q2).unwrap();
        assert!(rel_l2(&a, &b) <= 1e-4);
    }

    #[test]
    fn mean_is_conserved() {
        let q = QuadratureConfig::default();
        let g = PeriodicGrid::two_pi(64).unwrap();
        let h = RealField::from_fn(g, |x| 0.1 * x.sin() + 0.05 * (3.0 * x).cos());
        let out = rhs_deep_periodic(&state(h.clone()), &q).unwrap();
        assert!(out.mean().abs() <= 1e-8 * h.l2_norm());
    }

    #[test]
    fn geometry_is_checked() {
        let g = PeriodicGrid::two_pi(16).unwrap();
        let p = FluidParams::default().with_geometry(Geometry::DeepLine);
        assert!(rhs_deep_periodic_for(&InterfaceState::at_rest(g), &p, &QuadratureConfig::default()).is_err());
    }

    #[test]
    fn fluid_params_invariants() {
        let p = FluidParams {
            mu_plus: 2.0,
            mu_minus: 0.5,
            rho_plus: 1.0,
            rho_minus: 3.0,
            ..Default::default()
        };
        assert_eq!(p.mu_jump(), 1.5);
        assert_eq!(p.rho_jump(), -2.0);
        assert!(p.is_stable_configuration());
        assert!(FluidParams { mu_minus: 0.0, ..p }.validate().is_err());
        assert!(FluidParams { mu_plus: 0.0, ..p }.validate().is_err());
        assert!(FluidParams::one_phase(-1.0).validate().is_ok());
        assert!(!FluidParams { rho_plus: 4.0, ..p }.is_stable_configuration());
    }

    fn periodic_small(n: usize) -> impl Strategy<Value = RealField> {
        prop::collection::vec((-1.0f64..1.0, 0.0f64..(2.0 * PI)), 4).prop_map(move |coef| {
            let g = PeriodicGrid::two_pi(n).unwrap();
            RealField::from_fn(g, |x| {
                coef.iter()
                    .enumerate()
                    .map(|(k, (a, p))| 2.5e-3 * a * ((k + 1) as f64 * x + p).cos())
                    .sum()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn periodic_rhs_is_dissipative(h in periodic_small(32)) {
            let out = rhs_deep_periodic(&state(h.clone()), &QuadratureConfig::default()).unwrap();
            prop_assert!(out.dot(&h) <= 1e-6 * h.dot(&h));
        }

        #[test]
        fn periodic_rhs_is_translation_equivariant(h in periodic_small(32), m in 0i64..32) {
            let q = QuadratureConfig::default();
            let a = rhs_deep_periodic(&state(h.shift_nodes(m)), &q).unwrap();
            let b = rhs_deep_periodic(&state(h), &q).unwrap().shift_nodes(m);
            prop_assert!(a.sub(&b).max_abs() <= 1e-12 * b.max_abs().max(1e-300) + 1e-18);
        }

        #[test]
        fn line_rhs_is_translation_equivariant(m in -20i64..20, amp in 1e-3f64..5e-2) {
            let g = line_grid(256, 32.0);
            let b = bump(g, 1.0, amp);
            let q = QuadratureConfig::default();
            for k in [ContourKernel::DeepLine, ContourKernel::ConfinedStrip] {
                let a = k.evaluate(&state(b.shift_nodes(m)), &q).unwrap();
                let c = k.evaluate(&state(b.clone()), &q).unwrap().shift_nodes(m);
                // The output is not compactly supported; skip wrapped nodes.
                let n = b.len() as i64;
                let lo = m.max(0) as usize;
                let hi = (n + m.min(0)) as usize;
                let diff = (lo..hi)
                    .map(|i| (a.samples()[i] - c.samples()[i]).abs())
                    .fold(0.0, f64::max);
                prop_assert!(diff <= 1e-12 * c.max_abs(), "{diff}");
            }
        }

        #[test]
        fn line_rhs_is_dissipative(amp in 1e-4f64..1e-2, width in 0.7f64..2.0) {
            let g = line_grid(256, 32.0);
            let b = bump(g, width, amp);
            let q = QuadratureConfig::default();
            for k in [ContourKernel::DeepLine, ContourKernel::ConfinedStrip] {
                let out = k.evaluate(&state(b.clone()), &q).unwrap();
                prop_assert!(out.dot(&b) <= 1e-6 * b.dot(&b));
            }
        }
    }
}
