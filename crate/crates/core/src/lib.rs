//! Discrete-skeleton functional stochastic calculus.
//!
//! Brownian motion is read through its `±eps` exit-time embedding (the
//! skeleton). Non-anticipative functionals are differentiated along the
//! skeleton with discrete horizontal, second-order and vertical operators,
//! and their drift is recovered from crossing-count occupation fields. The
//! crate also provides exact p-variation, 1D/2D Young integrals and the
//! Monte Carlo experiments tying these together.
//!
//! All kernels are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

pub mod decomposition;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod occupation;
pub mod operators;
pub mod path_engine;
pub mod quadrature;
pub mod real;
pub mod rng;
pub mod stats;
pub mod variation;
pub mod young;

pub use error::{Error, Result};
pub use real::Real;

pub type ContinuousPath64 = path_engine::ContinuousPath<f64>;
pub type SteppedPath64 = path_engine::SteppedPath<f64>;
pub type Skeleton64 = path_engine::Skeleton<f64>;

pub type GridField64 = grid::GridField<f64>;
pub type OccupationField64 = occupation::OccupationField<f64>;
pub type VariationReport64 = variation::VariationReport<f64>;
pub type YoungResult64 = young::YoungResult<f64>;
pub type PathDecomposition64 = decomposition::PathDecomposition<f64>;
