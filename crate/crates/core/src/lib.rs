//! Numerical laboratory for semilinear parabolic equations driven by
//! scalar γ-Hölder rough paths: rough-path lifts, greedy controls,
//! Mittag-Leffler and Gronwall bound calculators, a spectral-Galerkin mild
//! solver, and the a-priori / absorbing-set / pullback-attractor checks.
//!
//! The numerics are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the double-precision instantiation used by the CLI.

pub mod acceptance;
pub mod attractor;
pub mod cli;
pub mod config;
pub mod error;
pub mod fbm;
pub mod greedy;
pub mod gronwall;
pub mod oracle;
pub mod real;
pub mod roughpath;
pub mod solver;
pub mod spectral;
pub mod specfun;

pub use error::{Error, Result};
pub use real::Real;

pub type RoughPath = roughpath::GridRoughPath<f64>;
pub type RoughPathF32 = roughpath::GridRoughPath<f32>;
pub type Model = spectral::SpectralModel<f64>;
pub type ModelF32 = spectral::SpectralModel<f32>;
pub type Constants = attractor::BoundConstants<f64>;
