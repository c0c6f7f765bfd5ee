//! Ground states of a coupled Schrödinger system on a plane with mixed
//! dispersion: classical second derivative in `x`, fractional Laplacian of
//! order `s` in `y`, and prescribed L² masses for both components.
//!
//! The crate is organised around the variational structure of the problem:
//!
//! * [`grid`] — periodic-box discretisation, fields, and quadratures.
//! * [`spectral`] — Fourier application of the mixed operator, kinetic
//!   energy, and trigonometric resampling (the fiber/dilation maps).
//! * [`functionals`] — the energy `J`, the Pohozaev functional `P`, the
//!   variational gradient, and the scalar fiber reduction `phi(t)` with its
//!   unique projection time.
//! * [`scalar`] — the single-equation ground state, its scaling dictionary,
//!   sharp Gagliardo–Nirenberg constants, and the mass/coupling thresholds.
//! * [`system`] — the coupled constrained solver, Lagrange multipliers,
//!   fiber path scans, and the ground-state verification checklist.
//! * [`rearrange`] — Steiner symmetrisation and the symmetrise-then-project
//!   step.
//! * [`io`] — the `AGF1` binary field format.
//!
//! All operations are deterministic and single-threaded; fields are
//! immutable after construction, so independent solves may run concurrently.

pub mod functionals;
pub mod grid;
pub mod io;
pub mod rearrange;
pub mod scalar;
pub mod spectral;
pub mod synth;
pub mod system;

mod error;
mod powers;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
