//! Numerical laboratory for the Muskat problem.
//!
//! The crate evolves the interface between two fluids in a porous medium
//! (equivalently a Hele-Shaw cell with gravity) and measures the qualitative
//! properties of the flow: energy balance, decay to the flat state,
//! Rayleigh-Taylor stability and instantaneous smoothing.
//!
//! Modules, bottom-up:
//!
//! * [`spectral`]: periodic grids, FFT multipliers, `Λ = √(−∂²)` in multiplier
//!   and kernel form, mollification, Sobolev norms and the semigroup `e^{−tΛ}`.
//! * [`contour`]: right-hand sides of the contour equations (deep line,
//!   confined strip, periodized deep kernel) by principal-value quadrature.
//! * [`vorticity`]: vortex-sheet amplitude for unequal viscosities, the
//!   Birkhoff-Rott velocity and the two-phase Rayleigh-Taylor quantity.
//! * [`ale`]: harmonic-extension maps, their cofactor matrices and the
//!   Dirichlet-to-Neumann trace.
//! * [`one_phase`]: the confined one-phase solver on the fixed strip.
//! * [`integrators`]: RK4 and exponential time differencing, plus the run
//!   driver that produces a [`diagnostics::RunReport`].
//! * [`diagnostics`]: energy, decay, smoothing and stability summaries.
//! * [`checks`]: operator, linearization and integrator-order self-checks.
//! * [`io`]: configuration files, CSV/JSON outputs, snapshots and SVG plots.

// `!(x > 0.0)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ale;
pub mod checks;
pub mod contour;
pub mod diagnostics;
pub mod error;
pub mod integrators;
pub mod io;
pub mod one_phase;
pub mod par;
pub mod spectral;
pub mod vorticity;

pub use error::{Error, Result};
