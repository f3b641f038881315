//! Robust H∞ fuzzy output-feedback synthesis for Takagi–Sugeno fuzzy bilinear
//! systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`matlib`]: dense symmetric linear algebra (Jacobi eigenvalues, Cholesky,
//!   Schur complements, `svec`/`smat`).
//! - [`sdp`]: affine matrix expressions, LMI systems and a log-barrier
//!   interior-point solver for feasibility and linear objectives.
//! - [`fbs`]: the fuzzy bilinear plant, membership blending and the PDC
//!   output-feedback law.
//! - [`synth`]: LMI assembly for the fuzzy-Lyapunov H∞ conditions, synthesis,
//!   and certificate verification.
//! - [`sim`]: fixed-step RK4 simulation, Lyapunov tracing and H∞ metrics.
//! - [`cstr`]: the Van de Vusse reactor benchmark.
//! - [`scenario`]: closed-loop plants and the benchmark scenarios built on top
//!   of the modules above.

pub mod cstr;
pub mod error;
pub mod fbs;
pub mod matlib;
pub mod scenario;
pub mod sdp;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
