//! Experiment configuration files.
//!
//! The format is TOML. Every key is checked: unknown keys, type mismatches
//! and constraint violations are reported together as [`ConfigIssue`]s with
//! the dotted key and, when it can be located, the line in the source text.
//!
//! ```toml
//! model = "deep_periodic"
//!
//! [grid]
//! n = 256
//!
//! [initial]
//! profile = "single_mode"
//! k = 1
//! amplitude = 1e-3
//!
//! [stepper]
//! scheme = "etd2"
//! t_end = 3.0
//! ```

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contour::{FluidParams, Geometry, InterfaceState, QuadratureConfig, CONFINED_AMPLITUDE_LIMIT};
use crate::diagnostics::DEFAULT_SOBOLEV_EXPONENTS;
use crate::error::{Error, Result};
use crate::integrators::{Model, ModelOptions, OnePhaseOptions, Scheme, StepperConfig};
use crate::one_phase::EllipticConfig;
use crate::spectral::{PeriodicGrid, RealField};
use crate::vorticity::VorticityConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted key, e.g. `fluid.mu_minus`; empty for syntax errors.
    pub key: String,
    pub line: Option<usize>,
    pub reason: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.key.is_empty(), self.line) {
            (false, Some(l)) => write!(f, "line {l}: `{}`: {}", self.key, self.reason),
            (false, None) => write!(f, "`{}`: {}", self.key, self.reason),
            (true, Some(l)) => write!(f, "line {l}: {}", self.reason),
            (true, None) => write!(f, "{}", self.reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(alias = "nx")]
    pub n: usize,
    #[serde(default = "two_pi", alias = "L")]
    pub period_length: f64,
    /// Rows of the one-phase strip.
    #[serde(default = "default_nz")]
    pub nz: usize,
}

fn two_pi() -> f64 {
    2.0 * PI
}
fn default_nz() -> usize {
    33
}
fn default_amplitude() -> f64 {
    1e-3
}

/// Named initial profiles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    #[default]
    Zero,
    /// `amplitude · sin(k k̃₁ x)`.
    SingleMode { k: u32, amplitude: f64 },
    /// Gaussian `amplitude · exp(−((x − L/2)/width)²)`.
    Bump { width: f64, amplitude: f64 },
    /// `|ĥ(k)| = amplitude·|k|^{−s_decay}` with uniform random phases.
    RandomHs {
        s_decay: f64,
        seed: u64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
}

impl InitialProfile {
    pub fn sample(&self, grid: PeriodicGrid) -> RealField {
        let kk = 2.0 * PI / grid.period_length();
        match *self {
            InitialProfile::Zero => RealField::zeros(grid),
            InitialProfile::SingleMode { k, amplitude } => {
                RealField::from_fn(grid, |x| amplitude * (k as f64 * kk * x).sin())
            }
            InitialProfile::Bump { width, amplitude } => {
                let c = 0.5 * grid.period_length();
                RealField::from_fn(grid, |x| amplitude * (-((x - c) / width).powi(2)).exp())
            }
            InitialProfile::RandomHs {
                s_decay,
                seed,
                amplitude,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let half = grid.n_points() / 2;
                let modes: Vec<(f64, f64)> = (1..half)
                    .map(|k| (amplitude * (k as f64).powf(-s_decay), rng.gen_range(0.0..2.0 * PI)))
                    .collect();
                RealField::from_fn(grid, |x| {
                    modes
                        .iter()
                        .enumerate()
                        .map(|(i, &(a, phase))| 2.0 * a * ((i + 1) as f64 * kk * x + phase).cos())
                        .sum()
                })
            }
        }
    }

    /// The same profile with its amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        match &mut out {
            InitialProfile::Zero => {}
            InitialProfile::SingleMode { amplitude, .. }
            | InitialProfile::Bump { amplitude, .. }
            | InitialProfile::RandomHs { amplitude, .. } => *amplitude *= factor,
        }
        out
    }

    /// Whether the continuous `H³` norm of the profile is finite.
    pub fn h3_converges(&self) -> bool {
        match *self {
            InitialProfile::RandomHs { s_decay, .. } => s_decay > 3.5,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_exponents")]
    pub sobolev_exponents: Vec<f64>,
    /// Write a spectrum file every this many snapshots.
    #[serde(default = "one_usize")]
    pub spectra_every: usize,
}

fn default_exponents() -> Vec<f64> {
    DEFAULT_SOBOLEV_EXPONENTS.to_vec()
}
fn one_usize() -> usize {
    1
}
fn one() -> f64 {
    1.0
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            sobolev_exponents: default_exponents(),
            spectra_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnePhaseSection {
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub elliptic: EllipticConfig,
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    /// Require a stable density stratification. If unset, an unstable one is
    /// allowed with a warning.
    #[serde(default)]
    pub stable: Option<bool>,
    /// Derived: the density stratification is unstable.
    #[serde(default)]
    pub unstable: bool,
    #[serde(default = "one")]
    pub rho_bar: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub initial: InitialProfile,
    pub fluid: FluidParams,
    pub stepper: StepperConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub vorticity: VorticityConfig,
    #[serde(default)]
    pub one_phase: OnePhaseSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

/// Partial fluid section; missing keys take the model's default.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FluidSection {
    mu_plus: Option<f64>,
    mu_minus: Option<f64>,
    rho_plus: Option<f64>,
    rho_minus: Option<f64>,
    geometry: Option<Geometry>,
    c_b: Option<f64>,
    c_t: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Model,
    #[serde(default)]
    stable: Option<bool>,
    #[serde(default)]
    unstable: bool,
    #[serde(default = "one")]
    rho_bar: f64,
    grid: GridSpec,
    #[serde(default)]
    initial: InitialProfile,
    #[serde(default)]
    fluid: FluidSection,
    stepper: StepperConfig,
    #[serde(default)]
    quadrature: QuadratureConfig,
    #[serde(default)]
    vorticity: VorticityConfig,
    #[serde(default)]
    one_phase: OnePhaseSection,
    #[serde(default)]
    diagnostics: DiagnosticsSpec,
    #[serde(default)]
    output_dir: Option<String>,
}

/// Fluid defaults of each model.
pub fn default_fluid(model: Model) -> FluidParams {
    let base = FluidParams::default();
    match model {
        Model::DeepLine => base.with_geometry(Geometry::DeepLine),
        Model::ConfinedStrip => base.with_geometry(Geometry::ConfinedStrip),
        Model::DeepPeriodic | Model::TwoViscosityBr => base.with_geometry(Geometry::DeepPeriodic),
        Model::OnePhaseAle => FluidParams::one_phase(-1.0),
    }
}

impl FluidSection {
    fn resolve(self, model: Model) -> FluidParams {
        let d = default_fluid(model);
        FluidParams {
            mu_plus: self.mu_plus.unwrap_or(d.mu_plus),
            mu_minus: self.mu_minus.unwrap_or(d.mu_minus),
            rho_plus: self.rho_plus.unwrap_or(d.rho_plus),
            rho_minus: self.rho_minus.unwrap_or(d.rho_minus),
            geometry: self.geometry.unwrap_or(d.geometry),
            c_b: self.c_b.unwrap_or(d.c_b),
            c_t: self.c_t.unwrap_or(d.c_t),
        }
    }
}

/// 1-based line of `key` inside `[section]` (top level when `section` is
/// empty).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current != section || key.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(i + 1);
            }
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Key named in a serde message such as ``unknown field `bogus` ``.
fn backticked(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    Some(&message[start..end])
}

struct Issues<'a> {
    text: &'a str,
    list: Vec<ConfigIssue>,
}

impl Issues<'_> {
    fn push(&mut self, section: &str, key: &str, reason: impl Into<String>) {
        let dotted = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        let line = locate(self.text, section, key).or_else(|| locate(self.text, section, ""));
        self.list.push(ConfigIssue {
            key: dotted,
            line,
            reason: reason.into(),
        });
    }

    fn check(&mut self, section: &str, result: Result<()>) {
        match result {
            Ok(()) => {}
            Err(Error::InvalidParameter { name, reason }) => self.push(section, name, reason),
            Err(e) => self.push(section, "", e.to_string()),
        }
    }
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let message = e.message().to_string();
        let key = if message.contains("unknown field") || message.contains("missing field") {
            backticked(&message).unwrap_or("").to_string()
        } else {
            String::new()
        };
        Error::Config(vec![ConfigIssue {
            key,
            line,
            reason: message,
        }])
    })?;
    let config = ExperimentConfig {
        model: raw.model,
        stable: raw.stable,
        unstable: raw.unstable,
        rho_bar: raw.rho_bar,
        grid: raw.grid,
        initial: raw.initial,
        fluid: raw.fluid.resolve(raw.model),
        stepper: raw.stepper,
        quadrature: raw.quadrature,
        vorticity: raw.vorticity,
        one_phase: raw.one_phase,
        diagnostics: raw.diagnostics,
        output_dir: raw.output_dir,
        warnings: Vec::new(),
    };
    config.validated(text)
}

/// Reads `path` and parses it.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

impl ExperimentConfig {
    /// Re-validates a config echoed into `meta.json`.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_value(value.clone()).map_err(|e| Error::Format(format!("config echo: {e}")))?;
        config.validated("")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn period_grid(&self) -> Result<PeriodicGrid> {
        PeriodicGrid::new(self.grid.n, self.grid.period_length)
    }

    pub fn initial_state(&self) -> Result<InterfaceState> {
        InterfaceState::new(self.initial.sample(self.period_grid()?), 0.0)
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            rho_bar: self.rho_bar,
            quadrature: self.quadrature,
            vorticity: self.vorticity,
            one_phase: OnePhaseOptions {
                nz: self.grid.nz,
                delta: self.one_phase.delta,
                elliptic: self.one_phase.elliptic,
            },
            sobolev_exponents: self.diagnostics.sobolev_exponents.clone(),
        }
    }

    fn validated(mut self, text: &str) -> Result<Self> {
        let mut is = Issues { text, list: Vec::new() };
        self.warnings.clear();

        let grid = PeriodicGrid::new(self.grid.n, self.grid.period_length);
        if let Err(e) = &grid {
            is.push("grid", "n", e.to_string());
        }
        if self.model == Model::OnePhaseAle && (self.grid.nz < 17 || self.grid.nz.is_multiple_of(2)) {
            is.push("grid", "nz", format!("{} must be odd and at least 17", self.grid.nz));
        }
        if !self.rho_bar.is_finite() {
            is.push("", "rho_bar", "must be finite");
        }
        is.check("fluid", self.fluid.validate());
        is.check("stepper", self.stepper.validate());
        is.check("quadrature", self.quadrature.validate());
        is.check("vorticity", self.vorticity.validate());

        match (self.model, self.fluid.geometry) {
            (Model::DeepLine, Geometry::DeepLine)
            | (Model::ConfinedStrip, Geometry::ConfinedStrip)
            | (Model::DeepPeriodic, Geometry::DeepPeriodic)
            | (Model::TwoViscosityBr, Geometry::DeepLine | Geometry::DeepPeriodic)
            | (Model::OnePhaseAle, Geometry::OnePhaseStrip) => {}
            (m, g) => is.push("fluid", "geometry", format!("{g:?} does not fit model {}", m.name())),
        }
        let contour = matches!(self.model, Model::DeepLine | Model::ConfinedStrip | Model::DeepPeriodic);
        if contour && self.fluid.mu_jump() != 0.0 {
            is.push("fluid", "mu_plus", "contour models need mu_plus = mu_minus; use two_viscosity_br");
        }
        if self.model == Model::OnePhaseAle && self.stepper.scheme != Scheme::Rk4 {
            is.push("stepper", "scheme", "the one-phase ALE model supports rk4 only");
        }
        if let Some(delta) = self.one_phase.delta {
            if !(delta.is_finite() && delta > 0.0) {
                is.push("one_phase", "delta", "must be positive");
            }
        }
        if self.diagnostics.spectra_every == 0 {
            is.push("diagnostics", "spectra_every", "must be at least 1");
        }
        if let Some(s) = self.diagnostics.sobolev_exponents.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            is.push("diagnostics", "sobolev_exponents", format!("{s} is not a valid exponent"));
        }

        self.unstable = self.model != Model::OnePhaseAle && !self.fluid.is_stable_configuration();
        if self.unstable {
            if self.stable == Some(true) {
                is.push(
                    "fluid",
                    "rho_plus",
                    format!("stable = true needs rho_plus < rho_minus (⟦ρ⟧ = {})", self.fluid.rho_jump()),
                );
            } else {
                self.warnings.push(format!(
                    "⟦ρ⟧ = {} ≥ 0: unstable stratification, the run is expected to halt",
                    self.fluid.rho_jump()
                ));
            }
        }

        self.check_initial(&mut is, grid.ok());
        if is.list.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(is.list))
        }
    }

    fn check_initial(&self, is: &mut Issues<'_>, grid: Option<PeriodicGrid>) {
        let ok = |v: f64| v.is_finite();
        match self.initial {
            InitialProfile::Zero => {}
            InitialProfile::SingleMode { k, amplitude } => {
                if k == 0 || grid.is_some_and(|g| 2 * k as usize >= g.n_points()) {
                    is.push("initial", "k", format!("mode {k} is not resolved by the grid"));
                }
                if !ok(amplitude) {
                    is.push("initial", "amplitude", "must be finite");
                }
            }
            InitialProfile::Bump { width, amplitude } => {
                if !(ok(width) && width > 0.0) {
                    is.push("initial", "width", "must be positive");
                }
                if !ok(amplitude) {
                    is.push("initial", "amplitude", "must be finite");
                }
            }
            InitialProfile::RandomHs { s_decay, amplitude, .. } => {
                if !(ok(s_decay) && s_decay > 0.0) {
                    is.push("initial", "s_decay", "must be positive");
                }
                if !ok(amplitude) {
                    is.push("initial", "amplitude", "must be finite");
                }
            }
        }
        let (Some(g), true) = (grid, is.list.is_empty()) else {
            return;
        };
        let h = self.initial.sample(g);
        if self.model == Model::ConfinedStrip && h.max_abs() >= CONFINED_AMPLITUDE_LIMIT {
            is.push("initial", "amplitude", format!("‖h‖∞ must stay below {CONFINED_AMPLITUDE_LIMIT}"));
        }
        if self.model == Model::OnePhaseAle && h.min() <= self.fluid.c_b {
            is.push("initial", "amplitude", format!("interface must stay above c_b = {}", self.fluid.c_b));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "model = \"deep_periodic\"\n[grid]\nn = 64\n[stepper]\nt_end = 1.0\n";

    fn issues(text: &str) -> Vec<ConfigIssue> {
        match parse_config(text) {
            Err(Error::Config(list)) => list,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults_and_round_trips() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.fluid, default_fluid(Model::DeepPeriodic));
        assert_eq!(c.stepper.cfl_constant, 0.5);
        assert_eq!(c.initial, InitialProfile::Zero);
        let again = parse_config(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_located() {
        let list = issues(&format!("{MINIMAL}bogus = 3\n"));
        assert_eq!(list[0].key, "bogus");
        assert_eq!(list[0].line, Some(6));
    }

    #[test]
    fn type_mismatch_is_reported() {
        let list = issues("model = \"deep_periodic\"\n[grid]\nn = \"many\"\n[stepper]\nt_end = 1.0\n");
        assert_eq!(list[0].line, Some(3));
    }

    #[test]
    fn zero_viscosity_names_the_invariant() {
        let list = issues(&format!("{MINIMAL}[fluid]\nmu_minus = 0.0\n"));
        assert_eq!(list[0].key, "fluid.mu_minus");
        assert_eq!(list[0].line, Some(7));
    }

    #[test]
    fn unstable_density_policy() {
        let text = format!("{MINIMAL}[fluid]\nrho_plus = 3.0\nrho_minus = 1.0\n");
        let c = parse_config(&text).unwrap();
        assert!(c.unstable && !c.warnings.is_empty());
        let strict = format!("stable = true\n{text}");
        assert_eq!(issues(&strict)[0].key, "fluid.rho_plus");
    }

    #[test]
    fn several_issues_are_collected() {
        let text = "model = \"one_phase_ale\"\n[grid]\nn = 64\nnz = 16\n[stepper]\nscheme = \"etd2\"\nt_end = -1.0\n";
        let keys: Vec<String> = issues(text).into_iter().map(|i| i.key).collect();
        assert!(keys.contains(&"grid.nz".to_string()));
        assert!(keys.contains(&"stepper.t_end".to_string()));
        assert!(keys.contains(&"stepper.scheme".to_string()));
    }

    #[test]
    fn random_profile_is_seeded() {
        let p = InitialProfile::RandomHs {
            s_decay: 2.6,
            seed: 7,
            amplitude: 1e-3,
        };
        let g = PeriodicGrid::two_pi(64).unwrap();
        assert_eq!(p.sample(g), p.sample(g));
        let spec = crate::spectral::transform(&p.sample(g));
        for k in [1usize, 5, 20] {
            let expect = 1e-3 * (k as f64).powf(-2.6);
            assert!((spec.coeffs()[k].norm() - expect).abs() < 1e-12 * expect.max(1e-3));
        }
        assert!(!p.h3_converges());
    }
}
