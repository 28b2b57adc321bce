//! Dynamically optimal monotone mean–variance (MMV) and classical mean–variance
//! (MV) portfolios for yields with independent increments.
//!
//! Models are given by deterministic differential characteristics on
//! piecewise-constant time segments plus fixed-time jump atoms. Local utilities
//! are computed through the drift of g-variations, maximized per time point,
//! and aggregated through deterministic stochastic exponentials.

pub mod aggregate;
pub mod catalog;
pub mod config;
pub mod drift;
pub mod duality;
pub mod error;
pub mod exact;
pub mod linalg;
pub mod localutil;
pub mod montecarlo;
pub mod model;
pub mod optimize;
pub mod quadrature;
pub mod reproduce;
pub mod scalar;

pub use error::{MmvError, Result};
pub use localutil::UtilityKind;
pub use scalar::{ExtendedReal, Real};

/// Double-precision aliases for the generic core types.
pub type Characteristics = model::LocalCharacteristics<f64>;
pub type Jumps = model::JumpMeasure<f64>;
pub type Model = model::MarketModel<f64>;
pub type Optimum = optimize::LocalOptimum<f64>;
pub type Schedule = aggregate::Schedule<f64>;
pub type Values = aggregate::GlobalValues<f64>;
pub type Diagnostics = duality::DensityDiagnostics<f64>;

/// Single-precision aliases.
pub type Characteristics32 = model::LocalCharacteristics<f32>;
pub type Model32 = model::MarketModel<f32>;
