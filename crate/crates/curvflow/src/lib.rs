//! Volume-preserving curvature flows for spacelike graph hypersurfaces in
//! Lorentzian ambient spaces.
//!
//! The ambient space is a warped product over a flat torus, written in a
//! Gaussian coordinate system `e^{2ψ}{-(dx⁰)² + σ_ij dx^i dx^j}`. Compact
//! spacelike hypersurfaces are graphs `x⁰ = u(x)` over the torus and are
//! evolved by
//!
//! ```text
//!     dx/dt = (Φ(F) - f) ν,
//! ```
//!
//! where `F` is a symmetric curvature function of the principal curvatures,
//! `Φ` a monotone concave reparametrization, `ν` the past-directed unit
//! normal, and `f` either a mixed-volume-preserving global term or a
//! constant. The crate provides:
//!
//! * [`ambient`] — metric presets, Christoffel/Riemann evaluation, energy
//!   condition sampling, volume densities,
//! * [`grid`] — periodic grids, scalar fields, finite-difference stencils,
//!   field serialization,
//! * [`geometry`] — graph geometry (induced metric, normal, second
//!   fundamental form, principal curvatures) plus an independent embedding
//!   oracle,
//! * [`curvfun`] — curvature functions, cones, derivatives, supplementary
//!   functions and the algebraic inequality checks,
//! * [`flow`] — the explicit flow engine with conservation and convergence
//!   diagnostics,
//! * [`cfc`] — constant-curvature solves, foliations, the linearized
//!   stability operator, and flow-recovery experiments,
//! * [`config`] / [`dispatch`] / [`report`] — the configuration format and
//!   the subcommands exposed by the thin `curvflow` binary.
//!
//! See `examples/` for one runnable program per capability.

pub mod ambient;
pub mod cfc;
pub mod config;
pub mod curvfun;
pub mod dispatch;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod report;

pub use error::{Error, Result};
