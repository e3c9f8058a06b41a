//! Numerical laboratory for Levy-driven Ornstein-Uhlenbeck dynamics on a
//! truncated eigenbasis: exact spectral semigroups, Gaussian/alpha-stable
//! noise samplers, closed-form and quadrature characteristic functionals of
//! the induced Mehler transition semigroup, explicit Lyapunov diagnostics,
//! path simulation with regularity statistics, and a finite-state oracle
//! for excessive functions, balayage and nests.

// Validation guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`,
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod lyapunov;
pub mod mc;
pub mod mehler;
pub mod noise;
pub mod pathsim;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod series;
pub mod spectral;

pub use error::{Error, Result};
pub use mc::McEstimate;
pub use noise::{NoiseFamily, NoiseSpec};
pub use rng::SeedSpec;
pub use spectral::{CoefVector, SpectralModel};
