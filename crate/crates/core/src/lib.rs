//! Trajectory prediction for signalized intersections.
//!
//! The pipeline encodes each agent's motion with an LSTM, aggregates
//! co-present agents through per-frame interaction graphs, fuses encoded
//! traffic-light context, attends over a window of the agent's own past
//! states, and decodes future displacements with noise-conditioned rollouts
//! trained adversarially under a best-of-K objective. A rule-based
//! intersection simulator generates desk-scale datasets in the same schema.
//!
//! All numeric components are generic over the scalar type ([`scalar::Scalar`]);
//! f64 is the reference precision, f32 is selectable for speed.

pub mod behavior;
pub mod data;
pub mod interaction;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod sim;
pub mod tensor;
pub mod verify;

/// Dense tensor in the reference precision.
pub type Tensor64 = tensor::TensorData<f64>;
/// Dense tensor in the fast precision.
pub type Tensor32 = tensor::TensorData<f32>;
/// Model parameters in the reference precision.
pub type Model64 = model::ModelParams<f64>;
/// Model parameters in the fast precision.
pub type Model32 = model::ModelParams<f32>;
