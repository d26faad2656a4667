//! Configuration, run orchestration and persistent outputs.

pub mod config;
pub mod output;
pub mod plot;
pub mod snapshot;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::contour::{Geometry, InterfaceState};
use crate::diagnostics::{fit_decay_rate, Breakdown, RateFit, RunReport};
use crate::error::{Error, Result};
use crate::integrators::{run_simulation_with, Model, PreparedModel, TimeStep};
use crate::one_phase::{default_delta, OnePhaseSolver, StripGrid, ZSpacing};
use crate::par;
use crate::spectral::{self, PeriodicGrid, RealField};
use config::ExperimentConfig;
use output::{DirLock, OutputFiles};

/// Runs a validated experiment. The config echo and warnings are added to
/// the report metadata.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let initial = config.initial_state()?;
    let mut report = run_simulation_with(
        config.model,
        &initial,
        &config.fluid,
        &config.stepper,
        &config.model_options(),
    )?;
    if let Some(meta) = report.metadata.as_object_mut() {
        meta.insert("initial_h3_converged".into(), config.initial.h3_converges().into());
        meta.insert("unstable".into(), config.unstable.into());
        meta.insert("warnings".into(), config.warnings.clone().into());
        if let Ok(m) = linearize(config, &[1], LINEARIZE_EPSILON) {
            meta.insert("measured_symbol".into(), serde_json::json!({ "k": m[0].0, "m": m[0].1 }));
        }
    }
    Ok(report)
}

/// Output directory of a config: explicit override, then `output_dir`, then
/// `out/<model>`.
pub fn output_dir(config: &ExperimentConfig, over: Option<&Path>) -> PathBuf {
    over.map(Path::to_path_buf)
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(config.model.name()))
}

/// Runs `config` and writes all outputs into `dir` under a lock. One-phase
/// runs also store the final pressure as `pressure.msks`.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> Result<(RunReport, OutputFiles)> {
    let _lock = DirLock::acquire(dir)?;
    let report = run_experiment(config)?;
    let files = output::write_timeseries(&report, Some(config), dir)?;
    if config.model == Model::OnePhaseAle {
        let grid = config.period_grid()?;
        let strip = StripGrid::with_period(
            grid.n_points(),
            config.grid.nz,
            config.fluid.c_b,
            grid.period_length(),
            ZSpacing::Uniform,
        )?;
        let h0 = config.initial_state()?.h;
        let delta = config.one_phase.delta.unwrap_or_else(|| default_delta(&strip));
        let mut solver = OnePhaseSolver::new(&h0, delta, strip, config.one_phase.elliptic)?;
        if solver.evaluate(&RealField::new(grid, report.final_h.clone())?).is_ok() {
            if let Some(q) = solver.pressure() {
                snapshot::write_snapshot(&dir.join("pressure.msks"), q)?;
            }
        }
    }
    Ok((report, files))
}

/// Probe amplitude used to measure linear symbols.
pub const LINEARIZE_EPSILON: f64 = 1e-5;

/// Measured linear symbol `m(k̃)` of the configured model, defined by
/// `h_t(εφ)/ε ≈ −m(k̃)φ̂`. Periodic geometries are probed mode by mode with
/// `ε cos(k̃x)`; line geometries with one centred Gaussian.
pub fn linearize(config: &ExperimentConfig, modes: &[usize], epsilon: f64) -> Result<Vec<(f64, f64)>> {
    let grid = config.period_grid()?;
    let kk = 2.0 * PI / grid.period_length();
    let probe = |phi: &RealField| -> Result<RealField> {
        let state = InterfaceState::new(phi.scaled(epsilon), 0.0)?;
        let mut model = PreparedModel::new(config.model, &state, &config.fluid, &config.model_options())?;
        Ok(model.evaluate(&state.h)?.h_t.scaled(1.0 / epsilon))
    };
    if let Some(&k) = modes.iter().find(|&&k| k == 0 || k >= grid.n_points() / 2) {
        return Err(Error::param("modes", format!("mode {k} is not resolved on {} points", grid.n_points())));
    }
    if matches!(config.fluid.geometry, Geometry::DeepLine | Geometry::ConfinedStrip) {
        let l = grid.period_length();
        let width = (4.0 * grid.spacing()).max(l / 64.0);
        let bump = RealField::from_fn(grid, |x| (-((x - 0.5 * l) / width).powi(2)).exp());
        let (b, o) = (spectral::transform(&bump), spectral::transform(&probe(&bump)?));
        Ok(modes
            .iter()
            .map(|&k| (k as f64 * kk, -(o.coeffs()[k] / b.coeffs()[k]).re))
            .collect())
    } else {
        modes
            .iter()
            .map(|&k| {
                let phi = RealField::from_fn(grid, |x| (k as f64 * kk * x).cos());
                let out = probe(&phi)?;
                Ok((k as f64 * kk, -out.dot(&phi) / phi.dot(&phi)))
            })
            .collect()
    }
}

/// Closed-form linear symbol where one is known: `π|ρ̄|k̃` on the deep
/// kernels, `|⟦ρ⟧|k̃/(μ⁺+μ⁻)` for the vortex sheet and `k̃ tanh(k̃|c_b|)` on
/// the one-phase strip.
pub fn reference_symbol(config: &ExperimentConfig, k: f64) -> Option<f64> {
    let f = &config.fluid;
    match config.model {
        Model::DeepLine | Model::DeepPeriodic => Some(PI * config.rho_bar.abs() * k),
        Model::TwoViscosityBr => Some(f.rho_jump().abs() * k / (f.mu_plus + f.mu_minus)),
        Model::OnePhaseAle => Some(k * (k * f.c_b.abs()).tanh()),
        Model::ConfinedStrip => None,
    }
}

/// One row of an amplitude sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub amplitude_factor: f64,
    /// Fitted rate of `‖h‖²_{L²}`.
    pub l2_rate: f64,
    pub l2_r_squared: f64,
    /// Fitted rate of `‖h‖²_{H¹}`.
    pub h1_rate: f64,
    /// `l2_rate / (−2 m(k̃₁))`.
    pub linear_ratio: f64,
    pub breakdown: Option<Breakdown>,
}

pub const DECAY_FACTORS: [f64; 3] = [1.0, 3.0, 10.0];

/// Runs the experiment at each amplitude factor, in parallel, and fits the
/// squared `L²` and `H¹` decay rates over the whole run.
pub fn decay_study(config: &ExperimentConfig, factors: &[f64]) -> Result<Vec<DecayRow>> {
    let m1 = linearize(config, &[1], LINEARIZE_EPSILON)?[0].1;
    let runs = par::map_range(factors.len(), |i| {
        let mut c = config.clone();
        c.initial = config.initial.scaled(factors[i]);
        run_experiment(&c)
    });
    factors
        .iter()
        .zip(runs)
        .map(|(&factor, report)| {
            let r = report?;
            let window = [r.times[0], *r.times.last().expect("snapshot")];
            let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
            let h1 = r
                .sobolev(1.0)
                .ok_or_else(|| Error::param("sobolev_exponents", "the sweep needs s = 1"))?;
            // A run that broke down early may be too short to fit.
            let fit = |v: &[f64]| match fit_decay_rate(&sq(v), &r.times, window) {
                Err(_) if r.breakdown.is_some() => Ok(RateFit { rate: f64::NAN, r_squared: f64::NAN }),
                other => other,
            };
            let (l2, h1) = (fit(&r.l2_norms)?, fit(h1)?);
            Ok(DecayRow {
                amplitude_factor: factor,
                l2_rate: l2.rate,
                l2_r_squared: l2.r_squared,
                h1_rate: h1.rate,
                linear_ratio: l2.rate / (-2.0 * m1),
                breakdown: r.breakdown.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementRow {
    /// `dt` or the number of points.
    pub parameter: f64,
    /// `‖u_i − u_{i+1}‖` on the coarsest grid, `None` on the finest level.
    pub difference: Option<f64>,
    /// `log₂` of successive difference ratios.
    pub order: Option<f64>,
}

fn refinement_rows(parameters: &[f64], finals: &[RealField]) -> Vec<RefinementRow> {
    let diffs: Vec<f64> = finals.windows(2).map(|w| w[0].sub(&w[1]).l2_norm()).collect();
    parameters
        .iter()
        .enumerate()
        .map(|(i, &p)| RefinementRow {
            parameter: p,
            difference: diffs.get(i).copied(),
            order: (i + 1 < diffs.len()).then(|| (diffs[i] / diffs[i + 1]).log2()),
        })
        .collect()
}

/// Final state of a run, sampled on every `stride`-th node.
fn final_on_coarse(config: &ExperimentConfig, coarse: PeriodicGrid, stride: usize) -> Result<RealField> {
    let r = run_experiment(config)?;
    if let Some(b) = &r.breakdown {
        return Err(Error::Format(format!("refinement run broke down: {:?} at t = {}", b.kind, b.time)));
    }
    RealField::new(coarse, r.final_h.iter().step_by(stride).copied().collect())
}

/// Time-step refinement: `levels` runs at `dt, dt/2, …` starting from the
/// configured (or automatic) step.
pub fn dt_refinement(config: &ExperimentConfig, levels: usize) -> Result<Vec<RefinementRow>> {
    let grid = config.period_grid()?;
    let initial = config.initial_state()?;
    let model = PreparedModel::new(config.model, &initial, &config.fluid, &config.model_options())?;
    let c = match config.stepper.linear_rate_coefficient {
        Some(c) => c,
        None => model.default_linear_coefficient(grid)?,
    };
    let (_, dt0) = config.stepper.resolve(c, &grid)?;
    let dts: Vec<f64> = (0..levels).map(|i| dt0 / f64::from(1u32 << i)).collect();
    let finals = par::map_range(levels, |i| {
        let mut cfg = config.clone();
        cfg.stepper.dt = TimeStep::Fixed(dts[i]);
        cfg.stepper.output_every = usize::MAX;
        final_on_coarse(&cfg, grid, 1)
    });
    Ok(refinement_rows(&dts, &finals.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Grid refinement: `levels` runs at `n, 2n, …` (and `2nz − 1` rows on the
/// strip) with the time step of the finest grid, compared on the coarse
/// nodes.
pub fn grid_refinement(config: &ExperimentConfig, levels: usize) -> Result<Vec<RefinementRow>> {
    let coarse = config.period_grid()?;
    let configs: Vec<ExperimentConfig> = (0..levels)
        .map(|i| {
            let mut c = config.clone();
            c.grid.n = config.grid.n << i;
            c.grid.nz = ((config.grid.nz - 1) << i) + 1;
            c.stepper.output_every = usize::MAX;
            c
        })
        .collect();
    let finest = configs.last().ok_or_else(|| Error::param("levels", "need at least one level"))?;
    let fine_grid = finest.period_grid()?;
    let model = PreparedModel::new(finest.model, &finest.initial_state()?, &finest.fluid, &finest.model_options())?;
    let c = match finest.stepper.linear_rate_coefficient {
        Some(c) => c,
        None => model.default_linear_coefficient(fine_grid)?,
    };
    let (_, dt) = finest.stepper.resolve(c, &fine_grid)?;
    let finals = par::map_range(levels, |i| {
        let mut cfg = configs[i].clone();
        cfg.stepper.dt = TimeStep::Fixed(dt);
        final_on_coarse(&cfg, coarse, 1 << i)
    });
    let ns: Vec<f64> = configs.iter().map(|c| c.grid.n as f64).collect();
    Ok(refinement_rows(&ns, &finals.into_iter().collect::<Result<Vec<_>>>()?))
}
