use proptest::prelude::*;

use muskat_core::contour::{FluidParams, InterfaceState};
use muskat_core::diagnostics::{energy_report, fit_decay_rate, nonincreasing};
use muskat_core::integrators::{run_simulation, step_etd, EtdOrder, Model, Scheme, StepperConfig, TimeStep};
use muskat_core::io::config::parse_config;
use muskat_core::io::snapshot::{decode, encode};
use muskat_core::one_phase::{StripField, StripGrid};
use muskat_core::spectral::{self, PeriodicGrid, RealField, SobolevExponent};
use muskat_core::vorticity::solve_vorticity_amplitude;

fn field(n: usize, amps: &[f64], phases: &[f64]) -> RealField {
    let g = PeriodicGrid::two_pi(n).unwrap();
    RealField::from_fn(g, |x| {
        amps.iter()
            .zip(phases)
            .enumerate()
            .map(|(k, (a, p))| a * ((k + 1) as f64 * x + p).cos() / (k + 1) as f64)
            .sum()
    })
}

fn modes(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-1.0f64..1.0, n), prop::collection::vec(0.0f64..std::f64::consts::TAU, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn config_round_trips(
        n_exp in 4u32..9,
        k in 1u32..4,
        amp in 1e-4f64..1e-2,
        scheme in prop_oneof![Just("rk4"), Just("etd1"), Just("etd2")],
        every in 1usize..10,
        t_end in 0.1f64..5.0,
    ) {
        let text = format!(
            "model = \"deep_periodic\"\n[grid]\nn = {}\n[initial]\nprofile = \"single_mode\"\nk = {k}\namplitude = {amp}\n\
             [stepper]\nscheme = \"{scheme}\"\nt_end = {t_end}\noutput_every = {every}\n",
            1usize << n_exp
        );
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&again, &cfg);
        let json = serde_json::to_value(&cfg).unwrap();
        prop_assert_eq!(muskat_core::io::config::ExperimentConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn snapshot_round_trips(values in prop::collection::vec(-1e3f64..1e3, 8 * 17)) {
        let g = StripGrid::new(8, 17, -1.0).unwrap();
        let f = StripField::new(g, values).unwrap();
        prop_assert_eq!(decode(&encode(&f), g).unwrap(), f);
    }

    #[test]
    fn fit_recovers_exponential_rates(rate in -5.0f64..5.0, scale in 1e-6f64..1e3, n in 10usize..60) {
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.05).collect();
        let values: Vec<f64> = times.iter().map(|t| scale * (rate * t).exp()).collect();
        let fit = fit_decay_rate(&values, &times, [0.0, times[n - 1]]).unwrap();
        prop_assert!((fit.rate - rate).abs() <= 1e-9 * (1.0 + rate.abs()));
    }

    #[test]
    fn etd_is_exact_without_nonlinearity(
        (a, p) in modes(6),
        c in 0.0f64..4.0,
        dt in 0.0f64..0.5,
        second in any::<bool>(),
    ) {
        let h = field(32, &a, &p);
        let s = InterfaceState::new(h.clone(), 0.0).unwrap();
        let rhs = |st: &InterfaceState| Ok(spectral::apply_lambda(&st.h).scaled(-c));
        let order = if second { EtdOrder::Second } else { EtdOrder::First };
        let out = step_etd(rhs, &s, dt, c, order).unwrap();
        let exact = spectral::apply_semigroup(&h, c * dt).unwrap();
        prop_assert!(out.h.sub(&exact).max_abs() <= 1e-12 * (1.0 + h.max_abs()));
    }

    #[test]
    fn semigroup_decreases_every_sobolev_norm((a, p) in modes(8), t in 0.0f64..1.0, dt in 0.0f64..1.0, s in 0.0f64..3.0) {
        let h = field(64, &a, &p);
        let s = SobolevExponent::new(s).unwrap();
        let early = spectral::sobolev_norm(&spectral::apply_semigroup(&h, t).unwrap(), s);
        let late = spectral::sobolev_norm(&spectral::apply_semigroup(&h, t + dt).unwrap(), s);
        prop_assert!(late <= early * (1.0 + 1e-12));
    }

    #[test]
    fn equal_viscosity_vorticity_is_density_jump_times_slope((a, p) in modes(4), scale in 1e-3f64..0.2) {
        let h = field(64, &a, &p).scaled(scale);
        let params = FluidParams::default();
        let w = solve_vorticity_amplitude(&InterfaceState::new(h.clone(), 0.0).unwrap(), &params, 1e-12).unwrap();
        let expected = spectral::derivative(&h).scaled(params.rho_jump());
        prop_assert!(w.omega.sub(&expected).max_abs() <= 1e-12 * (1.0 + expected.max_abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn small_deep_periodic_runs_dissipate((a, p) in modes(5), amp in 1e-4f64..1e-2) {
        let h = field(64, &a, &p).scaled(amp);
        let s = InterfaceState::new(h, 0.0).unwrap();
        let stepper = StepperConfig::new(Scheme::Rk4, TimeStep::AUTO, 0.3);
        let r = run_simulation(Model::DeepPeriodic, &s, &FluidParams::default(), &stepper).unwrap();
        prop_assert!(r.breakdown.is_none());
        prop_assert!(nonincreasing(&r, &r.l2_norms));
        prop_assert!(nonincreasing(&r, &r.linf_norms));
        prop_assert!(energy_report(&r).unwrap().l2_identity_residual <= 1e-3);
    }
}
