//! Self-checks shared by the command line and the test suites: operator
//! identities, linearization of the contour kernels and integrator orders.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ale::{dtn_trace, harmonic_extension};
use crate::contour::{rhs_deep_periodic, InterfaceState, QuadratureConfig};
use crate::error::Result;
use crate::integrators::{step_etd, step_rk4, EtdOrder, Scheme};
use crate::spectral::{self, PeriodicGrid, RealField};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self::new(name, value <= bound, format!("{value:.3e} (bound {bound:.0e})"))
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn rel_l2(a: &RealField, b: &RealField) -> f64 {
    a.sub(b).l2_norm() / b.l2_norm()
}

/// Zero-mean random trigonometric polynomial with modes `1..=modes`.
pub fn band_limited(grid: PeriodicGrid, modes: usize, seed: u64) -> RealField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, f64)> = (1..=modes)
        .map(|k| (k as f64, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let kk = 2.0 * PI / grid.period_length();
    RealField::from_fn(grid, |x| terms.iter().map(|(k, a, p)| a * (k * kk * x + p).cos()).sum())
}

/// Measured operator identities, see [`operator_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorMeasurements {
    /// Relative L² error of the kernel form of `Λ` against the multiplier.
    pub kernel_rel: f64,
    /// Relative L² error of the DtN trace against `−Λ`.
    pub dtn_rel: f64,
    /// Largest `‖e^{−tΛ}f‖ / (e^{−t}‖f‖)` over the random fields.
    pub semigroup_ratio: f64,
}

/// Band-limited input at `n = 256` for the kernel and DtN comparisons, and
/// 100 random zero-mean fields at `t ∈ {0.1, 1}` for the semigroup bound.
pub fn measure_operators(seed: u64) -> Result<OperatorMeasurements> {
    let g = PeriodicGrid::two_pi(256)?;
    let f = band_limited(g, 256 / 8, seed);
    let lam = spectral::apply_lambda(&f);
    let kernel_rel = rel_l2(&spectral::apply_lambda_kernel(&f), &lam);

    let dtn = dtn_trace(&harmonic_extension(&f, &[0.0])?);
    let dtn_rel = dtn.add_scaled(&lam, 1.0).l2_norm() / lam.l2_norm();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut semigroup_ratio = f64::NEG_INFINITY;
    let g64 = PeriodicGrid::two_pi(64)?;
    for i in 0..100 {
        let field = band_limited(g64, rng.gen_range(1..=32), seed.wrapping_add(i));
        for t in [0.1, 1.0] {
            let out = spectral::apply_semigroup(&field, t)?;
            semigroup_ratio = semigroup_ratio.max(out.l2_norm() / ((-t).exp() * field.l2_norm()));
        }
    }
    Ok(OperatorMeasurements {
        kernel_rel,
        dtn_rel,
        semigroup_ratio,
    })
}

/// Operator identities with bounds `10⁻⁶`, `10⁻¹²` and ratio `≤ 1` up to
/// round-off.
pub fn operator_suite(seed: u64) -> Result<Vec<Check>> {
    let m = measure_operators(seed)?;
    Ok(vec![
        Check::at_most("lambda kernel vs multiplier", m.kernel_rel, 1e-6),
        Check::at_most("dtn trace vs -lambda", m.dtn_rel, 1e-12),
        Check::new(
            "semigroup bound",
            m.semigroup_ratio <= 1.0 + 1e-12,
            format!("max ratio {:.15} over 100 fields, t in {{0.1, 1}}", m.semigroup_ratio),
        ),
    ])
}

/// Relative mismatch of `rhs(ε cos kx)/ε` against `−πΛ cos kx` on the
/// deep periodic kernel.
pub fn linearization_mismatch(grid: PeriodicGrid, q: &QuadratureConfig, k: f64, epsilon: f64) -> Result<f64> {
    let kk = 2.0 * PI / grid.period_length();
    let phi = RealField::from_fn(grid, |x| (k * kk * x).cos());
    let state = InterfaceState::new(phi.scaled(epsilon), 0.0)?;
    let out = rhs_deep_periodic(&state, q)?.scaled(1.0 / epsilon);
    Ok(rel_l2(&out, &spectral::apply_lambda(&phi).scaled(-PI)))
}

/// Mismatch at `ε = 10⁻⁵` for `k ∈ {1, 2, 4}`, and its reduction when `ε`
/// is halved.
pub fn linearization_checks(grid: PeriodicGrid, q: &QuadratureConfig) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for k in [1.0, 2.0, 4.0] {
        let m1 = linearization_mismatch(grid, q, k, 1e-5)?;
        let m2 = linearization_mismatch(grid, q, k, 5e-6)?;
        out.push(Check::at_most(format!("linearization k={k}"), m1, 1e-3));
        out.push(Check::new(
            format!("halving epsilon k={k}"),
            m1 >= 3.0 * m2,
            format!("reduction {:.3} ({m1:.3e} -> {m2:.3e})", m1 / m2),
        ));
    }
    Ok(out)
}

/// Linear-plus-small-nonlinear test problem integrated to `t = 1`:
/// `h_t = −Λh + 0.1 sin(0.3h)` from `sin x + 0.5 cos 2x`, with the stiff part
/// `−0.5Λ` split off for the exponential schemes.
pub fn order_test_solution(scheme: Scheme, dt: f64) -> Result<RealField> {
    let g = PeriodicGrid::two_pi(32)?;
    let h0 = RealField::from_fn(g, |x| x.sin() + 0.5 * (2.0 * x).cos());
    let mut s = InterfaceState::new(h0, 0.0)?;
    let rhs = |st: &InterfaceState| -> Result<RealField> {
        let lin = spectral::apply_lambda(&st.h).scaled(-1.0);
        Ok(lin.add_scaled(&st.h.map(|v| (v * 0.3).sin() * 0.1), 1.0))
    };
    let steps = (1.0 / dt).round() as usize;
    for _ in 0..steps {
        s = match scheme {
            Scheme::Rk4 => step_rk4(rhs, &s, dt)?,
            Scheme::Etd1 => step_etd(rhs, &s, dt, 0.5, EtdOrder::First)?,
            Scheme::Etd2 => step_etd(rhs, &s, dt, 0.5, EtdOrder::Second)?,
        };
    }
    Ok(s.h)
}

/// Observed order from three step sizes in ratio 2, using successive
/// differences so no reference solution is needed.
pub fn refinement_order(scheme: Scheme, dts: [f64; 3]) -> Result<f64> {
    let r: Vec<RealField> = dts.iter().map(|&dt| order_test_solution(scheme, dt)).collect::<Result<_>>()?;
    let e1 = r[0].sub(&r[1]).l2_norm();
    let e2 = r[1].sub(&r[2]).l2_norm();
    Ok((e1 / e2).log2())
}

pub const ORDER_STEPS: [f64; 3] = [0.05, 0.025, 0.0125];

/// Refinement orders of the three schemes against 4, 1 and 2 within 0.15.
pub fn order_checks() -> Result<Vec<Check>> {
    [(Scheme::Rk4, 4.0), (Scheme::Etd1, 1.0), (Scheme::Etd2, 2.0)]
        .into_iter()
        .map(|(scheme, expect)| {
            let p = refinement_order(scheme, ORDER_STEPS)?;
            Ok(Check::new(
                format!("{scheme:?} order"),
                (p - expect).abs() <= 0.15,
                format!("{p:.3} (expected {expect} +- 0.15)"),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_suite_passes() {
        let checks = operator_suite(7).unwrap();
        assert!(all_passed(&checks), "{checks:?}");
    }

    #[test]
    fn linearization_is_quadratic() {
        let checks = linearization_checks(PeriodicGrid::two_pi(64).unwrap(), &QuadratureConfig::default()).unwrap();
        assert!(all_passed(&checks), "{checks:?}");
    }

    #[test]
    fn orders() {
        let checks = order_checks().unwrap();
        assert!(all_passed(&checks), "{checks:?}");
    }
}
