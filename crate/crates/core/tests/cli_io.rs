use std::path::Path;
use std::process::{Command, Output};

use muskat_core::io::config::parse_config;
use muskat_core::io::output::{read_meta_config, read_series, DirLock};
use muskat_core::io::snapshot::read_snapshot;
use muskat_core::io::{run_experiment, run_to_dir};
use muskat_core::one_phase::StripGrid;
use muskat_core::Error;

const ZERO: &str = r#"
model = "deep_periodic"
[grid]
n = 32
[stepper]
scheme = "etd2"
dt = 0.01
t_end = 0.1
output_every = 3
"#;

const SMALL: &str = r#"
model = "deep_periodic"
[grid]
n = 64
[initial]
profile = "random_hs"
s_decay = 3.0
seed = 9
amplitude = 1e-3
[stepper]
scheme = "rk4"
t_end = 0.2
output_every = 2
[diagnostics]
spectra_every = 5
"#;

fn muskat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_muskat")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn zero_run_series_and_cadence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(ZERO).unwrap();
    let (report, files) = run_to_dir(&cfg, tmp.path()).unwrap();
    assert_eq!(report.steps_taken, 10);
    // floor(10 / 3) + 1 snapshots.
    assert_eq!(report.len(), 4);
    let s = read_series(&files.series).unwrap();
    assert_eq!(s.rows.len(), 4);
    assert_eq!(&s.columns[..5], ["time", "l2", "linf", "h2", "rt_min"]);
    for row in &s.rows {
        for (name, v) in s.columns.iter().zip(row) {
            match name.as_str() {
                "time" => {}
                // −⟦ρ⟧ on the flat state.
                "rt_min" => assert_eq!(*v, 2.0),
                _ => assert_eq!(*v, 0.0, "{name}"),
            }
        }
    }
    assert_eq!(s.column("time").unwrap(), [0.0, 0.03, 0.06, 0.09].map(|t: f64| (t / 0.01).round() * 0.01));
    assert_eq!(files.spectra.len(), 4);
}

#[test]
fn meta_round_trips_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(SMALL).unwrap();
    let (report, files) = run_to_dir(&cfg, tmp.path()).unwrap();
    assert_eq!(read_meta_config(&files.meta).unwrap(), cfg);
    assert_eq!(report.len(), report.steps_taken / 2 + 1);
    assert_eq!(files.spectra.len(), report.len().div_ceil(5));
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.meta).unwrap()).unwrap();
    assert_eq!(meta["code_version"], env!("CARGO_PKG_VERSION"));
    assert!(meta["derived"]["measured_symbol"]["m"].as_f64().unwrap() > 3.1);
}

#[test]
fn outputs_are_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(SMALL).unwrap();
    let (_, a) = run_to_dir(&cfg, &tmp.path().join("a")).unwrap();
    let (_, b) = run_to_dir(&cfg, &tmp.path().join("b")).unwrap();
    assert_eq!(std::fs::read(&a.series).unwrap(), std::fs::read(&b.series).unwrap());
    assert_eq!(std::fs::read(&a.meta).unwrap(), std::fs::read(&b.meta).unwrap());
    for (x, y) in a.spectra.iter().zip(&b.spectra) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
}

#[test]
fn locked_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(ZERO).unwrap();
    let lock = DirLock::acquire(tmp.path()).unwrap();
    assert!(matches!(run_to_dir(&cfg, tmp.path()), Err(Error::Locked(_))));
    drop(lock);
    run_to_dir(&cfg, tmp.path()).unwrap();
}

#[test]
fn one_phase_run_writes_pressure_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = parse_config(
        "model = \"one_phase_ale\"\n[grid]\nn = 32\nnz = 17\n[initial]\nprofile = \"single_mode\"\nk = 1\namplitude = 0.02\n[stepper]\nscheme = \"rk4\"\nt_end = 0.05\n",
    )
    .unwrap();
    let (report, files) = run_to_dir(&cfg, tmp.path()).unwrap();
    assert!(report.breakdown.is_none());
    assert!(read_series(&files.series).unwrap().column("min_jacobian").is_some());
    let g = StripGrid::new(32, 17, -1.0).unwrap();
    let q = read_snapshot(&tmp.path().join("pressure.msks"), g).unwrap();
    // Zero on the surface, about −x₂ below it.
    assert!(q.row(16).iter().all(|&v| v == 0.0));
    assert!(q.row(0).iter().all(|&v| (v - 1.0).abs() < 0.1));
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", "model = \"deep_periodic\"\n[grid]\nn = 64\nbogus = 1\n[stepper]\nt_end = 1.0\n");
    let out = muskat(&["run", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("bogus"), "{err}");

    let zero_mu = write(
        tmp.path(),
        "mu.toml",
        "model = \"two_viscosity_br\"\n[grid]\nn = 64\n[fluid]\nmu_minus = 0.0\n[stepper]\nt_end = 1.0\n",
    );
    assert_eq!(muskat(&["run", &zero_mu]).status.code(), Some(2));
    assert_eq!(muskat(&["run", "/nonexistent/config.toml"]).status.code(), Some(2));

    let ok = write(tmp.path(), "ok.toml", ZERO);
    let dir = tmp.path().join("out");
    let out = muskat(&["run", &ok, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("series.csv").exists() && !dir.join(".muskat.lock").exists());

    let series = dir.join("series.csv");
    for kind in ["norms", "spectrum", "rate_fit"] {
        let svg = tmp.path().join(format!("{kind}.svg"));
        let out = muskat(&["plot", series.to_str().unwrap(), "--kind", kind, "--out", svg.to_str().unwrap()]);
        // The zero run has no positive values to fit.
        if kind == "rate_fit" {
            assert_eq!(out.status.code(), Some(1));
        } else {
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
        }
    }
    assert_ne!(muskat(&["plot", series.to_str().unwrap(), "--kind", "pie"]).status.code(), Some(0));

    let out = muskat(&["check-operators"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn linearize_reports_the_deep_symbol() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "lin.toml", ZERO);
    let out = muskat(&["linearize", &cfg, "--modes", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!((r[1] - r[3]).abs() <= 1e-6 * r[3], "{r:?}");
    }
}

#[test]
fn decay_study_and_convergence_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "decay.toml",
        "model = \"deep_periodic\"\n[grid]\nn = 32\n[initial]\nprofile = \"single_mode\"\nk = 1\namplitude = 1e-3\n[stepper]\nscheme = \"etd2\"\nt_end = 1.0\n",
    );
    let out = muskat(&["decay-study", &cfg, "--factors", "1,10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 3);
    for l in text.lines().skip(1) {
        let ratio: f64 = l.split_whitespace().last().unwrap().parse().unwrap();
        assert!((0.85..=1.0 + 1e-9).contains(&ratio), "{l}");
    }
    let out = muskat(&["convergence", &cfg, "--dt-levels", "3", "--grid-levels", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
