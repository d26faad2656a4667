use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use muskat_core::checks::{self, Check};
use muskat_core::contour::QuadratureConfig;
use muskat_core::diagnostics::{energy_report, stability_report};
use muskat_core::io::config::{load_config, ExperimentConfig};
use muskat_core::io::plot::{render_plot, PlotKind};
use muskat_core::io::{self, RefinementRow};
use muskat_core::spectral::PeriodicGrid;
use muskat_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BREAKDOWN: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "muskat", version, about = "Interface evolution in porous media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write series.csv, meta.json and spectra/.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Operator identities, linearization and integrator orders.
    CheckOperators {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Measure the linear symbol of the configured model.
    Linearize {
        config: PathBuf,
        #[arg(long, default_value_t = 8)]
        modes: usize,
    },
    /// Amplitude sweep with fitted decay rates.
    DecayStudy {
        config: PathBuf,
        /// Amplitude factors applied to the initial profile.
        #[arg(long, value_delimiter = ',', default_values_t = io::DECAY_FACTORS)]
        factors: Vec<f64>,
    },
    /// Time-step and grid refinement tables.
    Convergence {
        config: PathBuf,
        #[arg(long, default_value_t = 4)]
        dt_levels: usize,
        #[arg(long, default_value_t = 3)]
        grid_levels: usize,
    },
    /// Render a series as SVG.
    Plot {
        series: PathBuf,
        #[arg(long)]
        kind: PlotKind,
        /// Output file; defaults to `<kind>.svg` next to the series.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            })
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Error> {
    let config = load_config(path).map_err(|e| match e {
        Error::Io { .. } | Error::Format(_) => Error::Config(vec![muskat_core::io::config::ConfigIssue {
            key: "<file>".into(),
            line: None,
            reason: e.to_string(),
        }]),
        other => other,
    })?;
    for w in &config.warnings {
        eprintln!("warning: {w}");
    }
    Ok(config)
}

fn report_checks(checks: &[Check]) -> u8 {
    for c in checks {
        println!("{c}");
    }
    if checks::all_passed(checks) {
        0
    } else {
        EXIT_CHECK
    }
}

fn dispatch(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run { config, out } => {
            let config = load(&config)?;
            let dir = io::output_dir(&config, out.as_deref());
            let (report, files) = io::run_to_dir(&config, &dir)?;
            let t = report.times.last().copied().unwrap_or(0.0);
            println!(
                "{}: {} steps, dt = {:.3e}, t = {t:.4}, {} snapshots -> {}",
                config.model.name(),
                report.steps_taken,
                report.dt,
                report.len(),
                files.series.display()
            );
            if let Ok(e) = energy_report(&report) {
                println!(
                    "energy residual {:.3e}, linf monotone {}",
                    e.l2_identity_residual, e.linf_monotone
                );
            }
            let s = stability_report(&report);
            println!("rt positive throughout: {}", s.rt_always_positive);
            Ok(match &report.breakdown {
                Some(b) => {
                    eprintln!("breakdown: {:?} at t = {}: {}", b.kind, b.time, b.detail);
                    EXIT_BREAKDOWN
                }
                None => 0,
            })
        }
        Command::CheckOperators { seed } => {
            let mut all = checks::operator_suite(seed)?;
            all.extend(checks::linearization_checks(PeriodicGrid::two_pi(64)?, &QuadratureConfig::default())?);
            all.extend(checks::order_checks()?);
            Ok(report_checks(&all))
        }
        Command::Linearize { config, modes } => {
            let config = load(&config)?;
            let ks: Vec<usize> = (1..=modes).collect();
            let table = io::linearize(&config, &ks, io::LINEARIZE_EPSILON)?;
            println!("{:>10} {:>14} {:>14} {:>14}", "k", "m(k)", "m(k)/k", "reference");
            for (k, m) in table {
                let reference = io::reference_symbol(&config, k).map_or("-".to_string(), |r| format!("{r:.8}"));
                println!("{k:>10.4} {m:>14.8} {:>14.8} {reference:>14}", m / k);
            }
            Ok(0)
        }
        Command::DecayStudy { config, factors } => {
            let config = load(&config)?;
            let rows = io::decay_study(&config, &factors)?;
            println!(
                "{:>8} {:>12} {:>10} {:>12} {:>10} {:>12}",
                "factor", "rate L2^2", "r^2", "rate H1^2", "H1/L2", "vs linear"
            );
            for r in &rows {
                println!(
                    "{:>8} {:>12.6} {:>10.6} {:>12.6} {:>10.4} {:>12.6}{}",
                    r.amplitude_factor,
                    r.l2_rate,
                    r.l2_r_squared,
                    r.h1_rate,
                    r.h1_rate / r.l2_rate,
                    r.linear_ratio,
                    r.breakdown.as_ref().map_or(String::new(), |b| format!("  breakdown {:?}", b.kind))
                );
            }
            Ok(if rows.iter().any(|r| r.breakdown.is_some()) { EXIT_BREAKDOWN } else { 0 })
        }
        Command::Convergence {
            config,
            dt_levels,
            grid_levels,
        } => {
            let config = load(&config)?;
            print_table("dt", &io::dt_refinement(&config, dt_levels)?);
            println!();
            print_table("n", &io::grid_refinement(&config, grid_levels)?);
            Ok(0)
        }
        Command::Plot { series, kind, out } => {
            let svg = render_plot(&series, kind)?;
            let name = format!("{}.svg", kind_name(kind));
            let out = out.unwrap_or_else(|| series.parent().unwrap_or(Path::new(".")).join(name));
            std::fs::write(&out, svg).map_err(|e| Error::Format(format!("{}: {e}", out.display())))?;
            println!("{}", out.display());
            Ok(0)
        }
    }
}

fn kind_name(kind: PlotKind) -> &'static str {
    match kind {
        PlotKind::Norms => "norms",
        PlotKind::Spectrum => "spectrum",
        PlotKind::RateFit => "rate_fit",
    }
}

fn print_table(label: &str, rows: &[RefinementRow]) {
    println!("{label:>12} {:>14} {:>8}", "difference", "order");
    for r in rows {
        let d = r.difference.map_or("-".into(), |d| format!("{d:.4e}"));
        let o = r.order.map_or("-".into(), |o| format!("{o:.3}"));
        println!("{:>12.6e} {d:>14} {o:>8}", r.parameter);
    }
}
