//! Pseudo-spectral tools for decay estimates of defocusing nonlinear
//! Schrödinger equations `i∂_t u + Δu = |u|^{q-1}u` on periodic boxes.

// `!(x > 0.0)` is used on purpose so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod duhamel;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod lemmas;
pub mod norms;
pub mod propagate;
pub mod quadrature;
pub mod spectral;
pub mod transforms;

pub use rustfft::num_complex::Complex64;

pub use diagnostics::{fit_decay_exponent, DecayFit, DecayTrace, StrichartzMeter, TraceRow, TraceSettings};
pub use duhamel::{DuhamelParams, DuhamelSplit, DUHAMEL_SIGN};
pub use error::{Error, Result};
pub use field::{sample_function, Field, Spectrum};
pub use grid::{make_grid, FrequencyLattice, GridSpec};
pub use lemmas::{LemmaKind, LemmaReport, RandomFieldSpec};
pub use propagate::{evolve, EquationSpec, Integrator, SolverConfig, TrajectoryHistory};
pub use transforms::GaussianDatum;
