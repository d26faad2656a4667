//! Time stepping: classical RK4, exponential time differencing with the stiff
//! part `−cΛ` treated exactly, and the run driver.
//!
//! The exponential schemes split `∂ₜh = F(h)` as `−cΛh + N(h)` with
//! `N(h) = F(h) + cΛh` and integrate the linear part per Fourier mode.

use serde::{Deserialize, Serialize};

use crate::contour::{ContourEvaluator, ContourKernel, FluidParams, InterfaceState, QuadratureConfig};
use crate::diagnostics::{Breakdown, BreakdownKind, RunReport, SobolevSeries, DEFAULT_SOBOLEV_EXPONENTS};
use crate::error::{Error, Result};
use crate::one_phase::{default_delta, EllipticConfig, OnePhaseSolver, StripGrid};
use crate::spectral::{self, PeriodicGrid, RealField, SpectralField};
use crate::vorticity::{self, BirkhoffRott, VorticityConfig};
use crate::{contour, one_phase};

/// Below this `|z|` the `φ` functions use their Taylor series.
const PHI_SERIES_THRESHOLD: f64 = 1e-4;

/// Explicit steps are `10×` shorter than exponential ones under `dt = auto`.
const ETD_DT_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[serde(alias = "RK4")]
    Rk4,
    #[serde(alias = "ETD1")]
    Etd1,
    #[serde(alias = "ETD2")]
    Etd2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoStep {
    #[serde(rename = "auto")]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeStep {
    Fixed(f64),
    Auto(AutoStep),
}

impl TimeStep {
    pub const AUTO: TimeStep = TimeStep::Auto(AutoStep::Auto);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_dt")]
    pub dt: TimeStep,
    #[serde(default = "default_cfl")]
    pub cfl_constant: f64,
    /// Coefficient `c` of the split-off `−cΛ`; `None` uses the model default.
    #[serde(default)]
    pub linear_rate_coefficient: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
}

fn default_scheme() -> Scheme {
    Scheme::Etd2
}
fn default_dt() -> TimeStep {
    TimeStep::AUTO
}
fn default_cfl() -> f64 {
    0.5
}
fn default_output_every() -> usize {
    1
}

impl StepperConfig {
    pub fn new(scheme: Scheme, dt: TimeStep, t_end: f64) -> Self {
        Self {
            scheme,
            dt,
            cfl_constant: 0.5,
            linear_rate_coefficient: None,
            t_end,
            output_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let TimeStep::Fixed(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::param("dt", format!("{dt} must be positive")));
            }
        }
        if !(self.cfl_constant > 0.0 && self.cfl_constant <= 1.0) {
            return Err(Error::param("cfl_constant", format!("{} must lie in (0, 1]", self.cfl_constant)));
        }
        if let Some(c) = self.linear_rate_coefficient {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::param("linear_rate_coefficient", format!("{c} must be non-negative")));
            }
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::param("t_end", format!("{} must be positive", self.t_end)));
        }
        if self.output_every == 0 {
            return Err(Error::param("output_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps and the step length that lands exactly on `t_end`.
    pub fn resolve(&self, c: f64, grid: &PeriodicGrid) -> Result<(usize, f64)> {
        let dt = match self.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto(_) => {
                if !(c > 0.0) {
                    return Err(Error::param("dt", "`auto` needs a positive linear coefficient"));
                }
                let explicit = self.cfl_constant / (c * grid.max_wavenumber());
                match self.scheme {
                    Scheme::Rk4 => explicit,
                    Scheme::Etd1 | Scheme::Etd2 => ETD_DT_FACTOR * explicit,
                }
            }
        };
        let steps = ((self.t_end / dt) - 1e-9).ceil().max(1.0) as usize;
        Ok((steps, self.t_end / steps as f64))
    }
}

/// `φ₁(z) = (eᶻ − 1)/z`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < PHI_SERIES_THRESHOLD {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        z.exp_m1() / z
    }
}

/// `φ₂(z) = (eᶻ − 1 − z)/z²`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < PHI_SERIES_THRESHOLD {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Right-hand side together with an instantaneous dissipation rate, which is
/// integrated alongside `h` by the same scheme.
type Stage = (RealField, f64);

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt >= 0.0 {
        Ok(())
    } else {
        Err(Error::param("dt", format!("{dt} must be finite and non-negative")))
    }
}

fn finite_or_blowup(state: InterfaceState) -> Result<InterfaceState> {
    if state.h.is_finite() {
        Ok(state)
    } else {
        Err(Error::BlowUp { time: state.time })
    }
}

fn at(h: RealField, time: f64) -> InterfaceState {
    InterfaceState { h, time }
}

fn rk4_core<F>(f: &mut F, s: &InterfaceState, dt: f64, k1: Stage) -> Result<(InterfaceState, f64)>
where
    F: FnMut(&InterfaceState) -> Result<Stage>,
{
    let t = s.time;
    let (k2, d2) = f(&at(s.h.add_scaled(&k1.0, 0.5 * dt), t + 0.5 * dt))?;
    let (k3, d3) = f(&at(s.h.add_scaled(&k2, 0.5 * dt), t + 0.5 * dt))?;
    let (k4, d4) = f(&at(s.h.add_scaled(&k3, dt), t + dt))?;
    let w = dt / 6.0;
    let h = s
        .h
        .add_scaled(&k1.0, w)
        .add_scaled(&k2, 2.0 * w)
        .add_scaled(&k3, 2.0 * w)
        .add_scaled(&k4, w);
    let dissipated = w * (k1.1 + 2.0 * d2 + 2.0 * d3 + d4);
    Ok((finite_or_blowup(at(h, t + dt))?, dissipated))
}

/// `Σ mᵢ(k̃) fᵢ` evaluated in Fourier space with one inverse transform.
fn combine(terms: &[(&SpectralField, &dyn Fn(f64) -> f64)]) -> RealField {
    let grid = *terms[0].0.grid();
    let n = grid.n_points();
    let coeffs = (0..n)
        .map(|j| {
            let k = grid.wavenumber(j);
            terms.iter().map(|(f, m)| f.coeffs()[j] * m(k)).sum()
        })
        .collect();
    spectral::inverse_transform(&SpectralField::from_coeffs(grid, coeffs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtdOrder {
    First,
    Second,
}

fn etd_core<F>(f: &mut F, s: &InterfaceState, dt: f64, c: f64, order: EtdOrder, k1: Stage) -> Result<(InterfaceState, f64)>
where
    F: FnMut(&InterfaceState) -> Result<Stage>,
{
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::param("linear_rate_coefficient", format!("{c} must be non-negative")));
    }
    let t = s.time;
    let z = |k: f64| -c * k.abs() * dt;
    let lam_c = |k: f64| c * k.abs();
    let h_hat = spectral::transform(&s.h);
    let n1 = k1.0.add_scaled(&combine(&[(&h_hat, &lam_c)]), 1.0);
    let n1_hat = spectral::transform(&n1);
    let e = |k: f64| z(k).exp();
    let p1 = |k: f64| dt * phi1(z(k));
    let a = combine(&[(&h_hat, &e), (&n1_hat, &p1)]);
    match order {
        EtdOrder::First => Ok((finite_or_blowup(at(a, t + dt))?, dt * k1.1)),
        EtdOrder::Second => {
            let a = finite_or_blowup(at(a, t + dt))?;
            let (k2, d2) = f(&a)?;
            let a_hat = spectral::transform(&a.h);
            let n2 = k2.add_scaled(&combine(&[(&a_hat, &lam_c)]), 1.0);
            let diff_hat = spectral::transform(&n2.sub(&n1));
            let p2 = |k: f64| dt * phi2(z(k));
            let one = |_: f64| 1.0;
            let h = combine(&[(&a_hat, &one), (&diff_hat, &p2)]);
            Ok((finite_or_blowup(at(h, t + dt))?, 0.5 * dt * (k1.1 + d2)))
        }
    }
}

/// One classical RK4 step.
pub fn step_rk4<F>(mut rhs: F, state: &InterfaceState, dt: f64) -> Result<InterfaceState>
where
    F: FnMut(&InterfaceState) -> Result<RealField>,
{
    check_dt(dt)?;
    let mut f = |s: &InterfaceState| rhs(s).map(|r| (r, 0.0));
    let k1 = f(state)?;
    Ok(rk4_core(&mut f, state, dt, k1)?.0)
}

/// One exponential step for `∂ₜh = rhs(h)` with `−cΛ` integrated exactly.
pub fn step_etd<F>(mut rhs: F, state: &InterfaceState, dt: f64, c: f64, order: EtdOrder) -> Result<InterfaceState>
where
    F: FnMut(&InterfaceState) -> Result<RealField>,
{
    check_dt(dt)?;
    let mut f = |s: &InterfaceState| rhs(s).map(|r| (r, 0.0));
    let k1 = f(state)?;
    Ok(etd_core(&mut f, state, dt, c, order, k1)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    DeepLine,
    ConfinedStrip,
    DeepPeriodic,
    #[serde(alias = "two_viscosity_BR")]
    TwoViscosityBr,
    #[serde(alias = "one_phase_ALE")]
    OnePhaseAle,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::DeepLine => "deep_line",
            Model::ConfinedStrip => "confined_strip",
            Model::DeepPeriodic => "deep_periodic",
            Model::TwoViscosityBr => "two_viscosity_br",
            Model::OnePhaseAle => "one_phase_ale",
        }
    }

    /// Contour kernel of the model, if it is a contour model.
    pub fn kernel(self) -> Option<ContourKernel> {
        match self {
            Model::DeepLine => Some(ContourKernel::DeepLine),
            Model::ConfinedStrip => Some(ContourKernel::ConfinedStrip),
            Model::DeepPeriodic => Some(ContourKernel::DeepPeriodic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnePhaseOptions {
    #[serde(default = "default_nz")]
    pub nz: usize,
    /// Mollification scale of the initial map; `None` is `0.05 L`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub elliptic: EllipticConfig,
}

fn default_nz() -> usize {
    33
}

impl Default for OnePhaseOptions {
    fn default() -> Self {
        Self {
            nz: 33,
            delta: None,
            elliptic: EllipticConfig::default(),
        }
    }
}

/// Model-side settings that are not part of the stepper.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptions {
    /// Overall prefactor of the contour equations.
    pub rho_bar: f64,
    pub quadrature: QuadratureConfig,
    pub vorticity: VorticityConfig,
    pub one_phase: OnePhaseOptions,
    pub sobolev_exponents: Vec<f64>,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            rho_bar: 1.0,
            quadrature: QuadratureConfig::default(),
            vorticity: VorticityConfig::default(),
            one_phase: OnePhaseOptions::default(),
            sobolev_exponents: DEFAULT_SOBOLEV_EXPONENTS.to_vec(),
        }
    }
}

/// One evaluation of a model at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub h_t: RealField,
    pub dissipation: f64,
    pub rt_min: f64,
    pub min_jacobian: Option<f64>,
}

enum Backend {
    Contour(ContourEvaluator),
    Sheet {
        br: BirkhoffRott,
        cfg: VorticityConfig,
        omega: Option<RealField>,
    },
    OnePhase(Box<OnePhaseSolver>),
}

/// A model bound to a grid and parameters, ready to be evaluated.
pub struct PreparedModel {
    kind: Model,
    params: FluidParams,
    rho_bar: f64,
    quadrature: QuadratureConfig,
    backend: Backend,
}

impl PreparedModel {
    pub fn new(kind: Model, initial: &InterfaceState, params: &FluidParams, opts: &ModelOptions) -> Result<Self> {
        params.validate()?;
        if !opts.rho_bar.is_finite() {
            return Err(Error::param("rho_bar", "must be finite"));
        }
        let backend = match kind {
            Model::DeepLine | Model::ConfinedStrip | Model::DeepPeriodic => {
                if params.mu_jump() != 0.0 {
                    return Err(Error::param(
                        "mu_plus",
                        "contour models assume equal viscosities; use two_viscosity_br",
                    ));
                }
                Backend::Contour(ContourEvaluator::new(
                    kind.kernel().expect("contour model"),
                    initial,
                    &opts.quadrature,
                )?)
            }
            Model::TwoViscosityBr => Backend::Sheet {
                br: BirkhoffRott::new(initial, params, &opts.quadrature)?,
                cfg: opts.vorticity,
                omega: None,
            },
            Model::OnePhaseAle => {
                let grid = initial.grid();
                let strip = StripGrid::with_period(
                    grid.n_points(),
                    opts.one_phase.nz,
                    params.c_b,
                    grid.period_length(),
                    one_phase::ZSpacing::Uniform,
                )?;
                initial.check_above_bottom(params.c_b)?;
                let delta = opts.one_phase.delta.unwrap_or_else(|| default_delta(&strip));
                Backend::OnePhase(Box::new(OnePhaseSolver::new(
                    &initial.h,
                    delta,
                    strip,
                    opts.one_phase.elliptic,
                )?))
            }
        };
        Ok(Self {
            kind,
            params: *params,
            rho_bar: opts.rho_bar,
            quadrature: opts.quadrature,
            backend,
        })
    }

    pub fn kind(&self) -> Model {
        self.kind
    }

    pub fn evaluate(&mut self, h: &RealField) -> Result<Evaluation> {
        let hp = spectral::derivative(h);
        match &mut self.backend {
            Backend::Contour(ev) => {
                let h_t = ev.eval(h)?.scaled(self.rho_bar);
                let slope = hp.max_abs();
                let rho = -self.params.rho_jump();
                let rt_min = if rho > 0.0 { rho / (1.0 + slope * slope).sqrt() } else { rho };
                Ok(Evaluation {
                    dissipation: -2.0 * h_t.dot(h),
                    h_t,
                    rt_min,
                    min_jacobian: None,
                })
            }
            Backend::Sheet { br, cfg, omega } => {
                let sol = vorticity::solve_with(br, h, &self.params, cfg, omega.as_ref())?;
                let u = br.velocity_with_slope(h, &hp, &sol.omega);
                let rt = vorticity::rt_from_slope(&hp, &u.normal, &self.params);
                *omega = Some(sol.omega);
                Ok(Evaluation {
                    dissipation: -2.0 * u.normal.dot(h),
                    h_t: u.normal,
                    rt_min: rt.min,
                    min_jacobian: None,
                })
            }
            Backend::OnePhase(solver) => {
                let e = solver.evaluate(h)?;
                Ok(Evaluation {
                    h_t: e.h_t,
                    dissipation: e.dissipation,
                    rt_min: e.lambda,
                    min_jacobian: Some(e.min_j),
                })
            }
        }
    }

    /// Default `c`: `π|ρ̄|` on the deep kernels, `|ρ̄| m(k̃)/k̃` at the first
    /// mode on the confined strip, `|⟦ρ⟧|/(μ⁺+μ⁻)` for the vortex sheet and
    /// `1` for the one-phase strip (the symbol `k̃ tanh(k̃|c_b|)` is below `k̃`).
    pub fn default_linear_coefficient(&self, grid: PeriodicGrid) -> Result<f64> {
        Ok(match self.kind {
            Model::DeepLine | Model::DeepPeriodic => std::f64::consts::PI * self.rho_bar.abs(),
            Model::ConfinedStrip => {
                let m = contour::measure_linear_symbol(ContourKernel::ConfinedStrip, grid, &self.quadrature, &[1], 1e-5)?;
                let (k, mk) = m[0];
                self.rho_bar.abs() * mk / k
            }
            Model::TwoViscosityBr => self.params.rho_jump().abs() / (self.params.mu_plus + self.params.mu_minus),
            Model::OnePhaseAle => 1.0,
        })
    }
}

fn classify(err: &Error) -> Option<BreakdownKind> {
    match err {
        Error::BlowUp { .. } | Error::NonFiniteField { .. } => Some(BreakdownKind::NonFinite),
        Error::NonDiffeomorphism { .. } | Error::DegenerateMap { .. } | Error::InterfaceTouchesBottom { .. } => {
            Some(BreakdownKind::Diffeomorphism)
        }
        Error::CoefficientDegeneracy { .. } => Some(BreakdownKind::Diffeomorphism),
        Error::AmplitudeViolation { .. } => Some(BreakdownKind::AmplitudeLimit),
        Error::CgNonConvergence { .. } | Error::ContractionFailure { .. } => Some(BreakdownKind::SolverFailure),
        _ => None,
    }
}

struct Recorder<'a> {
    report: RunReport,
    exponents: &'a [f64],
}

impl Recorder<'_> {
    fn push(&mut self, h: &RealField, time: f64, eval: &Evaluation, dissipated: f64) {
        let r = &mut self.report;
        let spec = spectral::transform(h);
        r.times.push(time);
        r.l2_norms.push(h.l2_norm());
        r.linf_norms.push(h.max_abs());
        r.h2_norms.push(spectral::sobolev_norm_of_spectrum(&spec, 2.0));
        for (series, &s) in r.sobolev_samples.iter_mut().zip(self.exponents) {
            series.values.push(spectral::sobolev_norm_of_spectrum(&spec, s));
        }
        r.rt_min.push(eval.rt_min);
        r.slope_max.push(spectral::derivative(h).max_abs());
        if let Some(j) = eval.min_jacobian {
            r.min_jacobian.push(j);
        }
        let half = h.len() / 2;
        r.spectral_tails.push(spec.coeffs()[..=half].iter().map(|c| c.norm()).collect());
        if let Some(d) = r.dissipation_integral.as_mut() {
            d.push(dissipated);
        }
    }

    fn last_time(&self) -> Option<f64> {
        self.report.times.last().copied()
    }
}

/// Runs with default [`ModelOptions`].
pub fn run_simulation(
    model: Model,
    initial: &InterfaceState,
    params: &FluidParams,
    stepper: &StepperConfig,
) -> Result<RunReport> {
    run_simulation_with(model, initial, params, stepper, &ModelOptions::default())
}

/// Advances `initial` to `t_end` or to the first breakdown.
///
/// Setup failures are returned as errors. Breakdowns during the run (RT sign
/// change, non-finite state, loss of the diffeomorphism, solver failure) end
/// the run and are recorded in the returned, truncated report.
pub fn run_simulation_with(
    model: Model,
    initial: &InterfaceState,
    params: &FluidParams,
    stepper: &StepperConfig,
    opts: &ModelOptions,
) -> Result<RunReport> {
    stepper.validate()?;
    if model == Model::OnePhaseAle && stepper.scheme != Scheme::Rk4 {
        return Err(Error::param("scheme", "the one-phase ALE model supports RK4 only"));
    }
    let grid = *initial.grid();
    let mut prepared = PreparedModel::new(model, initial, params, opts)?;
    let c = match stepper.linear_rate_coefficient {
        Some(c) => c,
        None => prepared.default_linear_coefficient(grid)?,
    };
    let (steps, dt) = stepper.resolve(c, &grid)?;
    let metadata = serde_json::json!({
        "model": model.name(),
        "n": grid.n_points(),
        "period_length": grid.period_length(),
        "params": params,
        "stepper": stepper,
        "rho_bar": opts.rho_bar,
        "linear_rate_coefficient": c,
        "dt": dt,
        "steps": steps,
    });
    let mut rec = Recorder {
        report: RunReport {
            sobolev_samples: opts
                .sobolev_exponents
                .iter()
                .map(|&s| SobolevSeries { s, values: Vec::new() })
                .collect(),
            dt,
            ..RunReport::empty(metadata)
        },
        exponents: &opts.sobolev_exponents,
    };

    let mut state = InterfaceState {
        h: initial.h.clone(),
        time: 0.0,
    };
    let mut dissipated = 0.0;
    let mut n = 0;
    let breakdown = loop {
        let time = n as f64 * dt;
        let eval = match prepared.evaluate(&state.h) {
            Ok(e) => e,
            Err(e) => match classify(&e) {
                Some(kind) => break Some((kind, time, e.to_string())),
                None => return Err(e),
            },
        };
        if n % stepper.output_every == 0 {
            rec.push(&state.h, time, &eval, dissipated);
        }
        if !(eval.rt_min > 0.0) {
            if rec.last_time() != Some(time) {
                rec.push(&state.h, time, &eval, dissipated);
            }
            break Some((
                BreakdownKind::RayleighTaylor,
                time,
                format!("Rayleigh-Taylor minimum {:e}", eval.rt_min),
            ));
        }
        if n == steps {
            break None;
        }
        let k1 = (eval.h_t, eval.dissipation);
        let mut f = |s: &InterfaceState| prepared.evaluate(&s.h).map(|e| (e.h_t, e.dissipation));
        let here = InterfaceState { h: state.h, time };
        let stepped = match stepper.scheme {
            Scheme::Rk4 => rk4_core(&mut f, &here, dt, k1),
            Scheme::Etd1 => etd_core(&mut f, &here, dt, c, EtdOrder::First, k1),
            Scheme::Etd2 => etd_core(&mut f, &here, dt, c, EtdOrder::Second, k1),
        };
        match stepped {
            Ok((next, d)) => {
                state = next;
                dissipated += d;
                n += 1;
                rec.report.steps_taken = n;
            }
            Err(e) => match classify(&e) {
                Some(kind) => {
                    state = here;
                    let t = if kind == BreakdownKind::NonFinite { time + dt } else { time };
                    break Some((kind, t, e.to_string()));
                }
                None => return Err(e),
            },
        }
    };
    rec.report.breakdown = breakdown.map(|(kind, time, detail)| Breakdown { kind, time, detail });
    rec.report.final_h = state.h.into_samples();
    Ok(rec.report)
}
