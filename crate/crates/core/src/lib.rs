//! Weather-responsive freeway speed recommendations.
//!
//! A quantile regression forest predicts the interquartile range of vehicle
//! speeds for each 10-minute window from road-weather features. The upper end
//! is then capped by the speed that can still stop within the visible
//! distance on the current pavement grip, and by the posted limit.
//!
//! Numeric cores are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix them to `f64`, which is what the file pipeline uses.
// NaN-rejecting range checks read as `!(x >= lo)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod geo;
pub mod model;
pub mod pipeline;
pub mod qrf;
pub mod safety;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Forest = qrf::Forest<f64>;
pub type Dataset = qrf::Dataset<f64>;
pub type PhysicsParams = safety::PhysicsParams<f64>;
pub type EnvelopeResult = safety::EnvelopeResult<f64>;
pub type SpeedInterval = safety::SpeedInterval<f64>;
pub type ProjectedPoint = geo::ProjectedPoint<f64>;
