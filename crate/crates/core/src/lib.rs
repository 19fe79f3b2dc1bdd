//! Small-noise large deviations for Volterra-type stochastic volatility
//! models.
//!
//! The log-price is driven by `σ(V̂)` where `V̂ = 𝒦(U∘V)` is a Volterra
//! transform of a one-dimensional diffusion `V`. The crate computes the
//! rate functions of the small-noise LDP by discretize-then-optimize,
//! simulates the scaled model to check the LDP empirically, and evaluates
//! the large-strike and small-`x` asymptotics.
//!
//! All numerics are generic over [`Scalar`] (`f32`, `f64`); the `*64`
//! aliases below fix the common `f64` instantiation.

// `!(a > b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod kernel;
pub mod model;
pub mod montecarlo;
pub mod optimize;
pub mod rate;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelSpec64 = model::ModelSpec<f64>;
pub type FunctionSpec64 = model::FunctionSpec<f64>;
pub type KernelSpec64 = kernel::KernelSpec<f64>;
pub type Grid64 = model::Grid<f64>;
pub type PathValues64 = model::PathValues<f64>;
pub type KernelWeights64 = kernel::KernelWeights<f64>;
pub type ControlPath64 = dynamics::ControlPath<f64>;
pub type DiscreteModel64 = dynamics::DiscreteModel<f64>;
pub type PathBatch64 = dynamics::PathBatch<f64>;
pub type RateResult64 = rate::RateResult<f64>;


pub type ModelSpec32 = model::ModelSpec<f32>;
pub type Grid32 = model::Grid<f32>;
pub type DiscreteModel32 = dynamics::DiscreteModel<f32>;

pub type RateResult32 = rate::RateResult<f32>;
