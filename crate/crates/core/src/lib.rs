//! Two-species aggregation with pointy attractive potentials.
//!
//! Finite-volume, sticky-particle and kinetic relaxation solvers for
//! `∂ₜρ_α + χ_α∂ₓ(â ρ_α) = 0`, `â = ∂ₓK ∗ (θ₁ρ₁ + θ₂ρ₂)`, together with the
//! measure tooling, scenario configuration and reporting used by the
//! `aggsync` command line tool.

// `!(a < b)` is used on purpose so that NaN fails every guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expconv;
pub mod fv;
pub mod kernel;
pub mod kinetic;
pub mod measures;
pub mod params;
pub mod particles;
pub mod peaks;
pub mod scenario;
pub mod sync;

pub use error::{Error, Result};
pub use kernel::{Exponential, KernelSpec, PointyKernel, Regularized, SampledKernel};
pub use measures::{
    coupled_w2, moments, quantile, wasserstein2, weighted_center, Bump, DiscreteMeasure, Grid,
    SpeciesPair,
};
pub use params::{ModelParams, Species};
