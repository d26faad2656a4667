//! Post-processing of run reports: energy balance, maximum principle, decay
//! rates, spectral smoothing and stability bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sobolev exponents sampled by default at every snapshot.
pub const DEFAULT_SOBOLEV_EXPONENTS: [f64; 6] = [0.0, 1.0, 1.75, 2.0, 2.5, 3.0];

/// Per-step slack allowed in the monotonicity checks.
pub const MONOTONE_SLACK: f64 = 1e-8;

/// Cap above which an `H³` norm counts as infinite.
pub const H3_SANITY_CAP: f64 = 1e6;

/// Amplitude floor below which spectral coefficients are rounding noise.
pub const SPECTRAL_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownKind {
    NonFinite,
    RayleighTaylor,
    Diffeomorphism,
    AmplitudeLimit,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub kind: BreakdownKind,
    pub time: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevSeries {
    pub s: f64,
    pub values: Vec<f64>,
}

/// Time-aligned diagnostics of one run, one entry per snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub times: Vec<f64>,
    pub l2_norms: Vec<f64>,
    pub linf_norms: Vec<f64>,
    pub h2_norms: Vec<f64>,
    pub sobolev_samples: Vec<SobolevSeries>,
    /// Minimum of the model's Rayleigh-Taylor quantity.
    pub rt_min: Vec<f64>,
    /// `‖h′‖_∞`.
    pub slope_max: Vec<f64>,
    /// Minimum Jacobian of the ALE map; empty for contour models.
    pub min_jacobian: Vec<f64>,
    /// `|ĥ(k)|` for `k = 0..=n/2`.
    pub spectral_tails: Vec<Vec<f64>>,
    /// Running `∫₀ᵗ D`, `None` when the model has no dissipation functional.
    pub dissipation_integral: Option<Vec<f64>>,
    pub steps_taken: usize,
    pub dt: f64,
    pub breakdown: Option<Breakdown>,
    /// Interface samples of the last valid state.
    pub final_h: Vec<f64>,
    pub metadata: serde_json::Value,
}

impl RunReport {
    pub fn empty(metadata: serde_json::Value) -> Self {
        Self {
            times: Vec::new(),
            l2_norms: Vec::new(),
            linf_norms: Vec::new(),
            h2_norms: Vec::new(),
            sobolev_samples: Vec::new(),
            rt_min: Vec::new(),
            slope_max: Vec::new(),
            min_jacobian: Vec::new(),
            spectral_tails: Vec::new(),
            dissipation_integral: Some(Vec::new()),
            steps_taken: 0,
            dt: 0.0,
            breakdown: None,
            final_h: Vec::new(),
            metadata,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sobolev(&self, s: f64) -> Option<&[f64]> {
        self.sobolev_samples
            .iter()
            .find(|series| (series.s - s).abs() < 1e-12)
            .map(|series| series.values.as_slice())
    }

    /// Index of the first snapshot at or after `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&x| x >= t - 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub l2_identity_residual: f64,
    pub linf_monotone: bool,
}

fn steps_between(report: &RunReport, i: usize) -> f64 {
    if report.len() < 2 || report.dt <= 0.0 {
        return 1.0;
    }
    ((report.times[i + 1] - report.times[i]) / report.dt).round().max(1.0)
}

/// `true` iff `values` never grows by more than the per-step slack.
pub fn nonincreasing(report: &RunReport, values: &[f64]) -> bool {
    values
        .windows(2)
        .enumerate()
        .all(|(i, w)| w[1] <= w[0] + MONOTONE_SLACK * steps_between(report, i))
}

/// `max_t |‖h(t)‖² + ∫₀ᵗ D − ‖h₀‖²| / ‖h₀‖²` and the `L∞` maximum principle.
pub fn energy_report(report: &RunReport) -> Result<EnergyReport> {
    let diss = report
        .dissipation_integral
        .as_ref()
        .ok_or_else(|| Error::MissingDissipation(model_name(report)))?;
    let linf_monotone = nonincreasing(report, &report.linf_norms);
    let Some(&l0) = report.l2_norms.first() else {
        return Ok(EnergyReport {
            l2_identity_residual: 0.0,
            linf_monotone,
        });
    };
    let e0 = l0 * l0;
    let residual = if e0 == 0.0 {
        0.0
    } else {
        report
            .l2_norms
            .iter()
            .zip(diss)
            .map(|(l, d)| (l * l + d - e0).abs() / e0)
            .fold(0.0, f64::max)
    };
    Ok(EnergyReport {
        l2_identity_residual: residual,
        linf_monotone,
    })
}

fn model_name(report: &RunReport) -> String {
    report
        .metadata
        .get("model")
        .and_then(|m| m.as_str())
        .unwrap_or("unknown")
        .to_string()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
}

/// Least-squares slope of `log(values)` against time over `window`.
pub fn fit_decay_rate(values: &[f64], times: &[f64], window: [f64; 2]) -> Result<RateFit> {
    if values.len() != times.len() {
        return Err(Error::InvalidWindow(format!(
            "{} values for {} times",
            values.len(),
            times.len()
        )));
    }
    let [t0, t1] = window;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= t0 - 1e-12 && t <= t1 + 1e-12)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 10 {
        return Err(Error::InvalidWindow(format!(
            "[{t0}, {t1}] holds {} samples, at least 10 are needed",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidWindow(format!("value {v} at t = {t} is not positive")));
    }
    let ys: Vec<(f64, f64)> = pts.iter().map(|&(t, v)| (t, v.ln())).collect();
    Ok(linear_fit(&ys))
}

/// Ordinary least squares `y = a + rate·x`.
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> RateFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return RateFit {
            rate: 0.0,
            r_squared: 1.0,
        };
    }
    let rate = sxy / sxx;
    let r_squared = if syy <= f64::EPSILON * my.abs().max(1.0) * n {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).min(1.0)
    };
    RateFit { rate, r_squared }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingReport {
    pub h3_finite: bool,
    pub analyticity_sigma: f64,
}

/// Exponential decay rate `σ` of `|ĥ(k)|`, fitted as the slope of
/// `−log|ĥ(k)|` against `k̃` over the top third of the modes above the floor.
/// Zero data gives `+∞`.
pub fn analyticity_sigma(amplitudes: &[f64], wavenumber_step: f64) -> f64 {
    let resolved: Vec<(f64, f64)> = amplitudes
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &a)| a > SPECTRAL_FLOOR)
        .map(|(k, &a)| (k as f64 * wavenumber_step, -a.ln()))
        .collect();
    // Fewer than three resolved modes: band-limited or zero data.
    if resolved.len() < 3 {
        return f64::INFINITY;
    }
    let start = resolved.len() - (resolved.len() / 3).max(3);
    linear_fit(&resolved[start..]).rate
}

fn wavenumber_step(report: &RunReport) -> f64 {
    let l = report
        .metadata
        .get("period_length")
        .and_then(|v| v.as_f64())
        .unwrap_or(2.0 * std::f64::consts::PI);
    2.0 * std::f64::consts::PI / l
}

/// `H³` finiteness at `t_probe` and the spectral-tail slope there.
///
/// `h3_finite` holds when the `H³` norm at `t_probe` is below the sanity cap
/// while the initial value is not: either it exceeds the cap, or the run
/// metadata flags the initial `H³` sum as non-convergent
/// (`"initial_h3_converged": false`).
pub fn smoothing_report(report: &RunReport, t_probe: f64) -> SmoothingReport {
    let Some(i) = report.index_at(t_probe) else {
        return SmoothingReport {
            h3_finite: false,
            analyticity_sigma: f64::NAN,
        };
    };
    let h3 = report.sobolev(3.0).unwrap_or(&[]);
    let h3_at = h3.get(i).copied().unwrap_or(f64::NAN);
    let h3_0 = h3.first().copied().unwrap_or(f64::NAN);
    let flagged = report.metadata.get("initial_h3_converged").and_then(|v| v.as_bool()) == Some(false);
    let initially_rough = !(h3_0 < H3_SANITY_CAP) || flagged;
    SmoothingReport {
        h3_finite: h3_at < H3_SANITY_CAP && initially_rough,
        analyticity_sigma: analyticity_sigma(&report.spectral_tails[i], wavenumber_step(report)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub rt_always_positive: bool,
    pub first_violation: Option<f64>,
    pub slope_max: Vec<f64>,
}

pub fn stability_report(report: &RunReport) -> StabilityReport {
    let first = report.rt_min.iter().position(|&v| !(v > 0.0)).map(|i| report.times[i]);
    let first_violation = match (&report.breakdown, first) {
        (Some(b), _) if b.kind == BreakdownKind::RayleighTaylor => Some(first.map_or(b.time, |t| t.min(b.time))),
        (_, f) => f,
    };
    StabilityReport {
        rt_always_positive: first_violation.is_none(),
        first_violation,
        slope_max: report.slope_max.clone(),
    }
}
