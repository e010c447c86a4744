//! Text classification toolkit for six-digit commodity codes.
//!
//! The crate covers the full modelling path:
//!
//! * [`corpus`]: ingestion, normalization, vocabulary, stratified split and upsampling.
//! * [`nn`]: a small set of differentiable layers with analytic backward passes.
//! * [`models`]: the DNN and Text-CNN classifiers, training, prediction and the weights file.
//! * [`tuner`]: Gaussian-process Bayesian optimization over hyperparameter spaces.
//! * [`eval`]: confusion matrices, precision/recall, F-beta and band tables.
//! * [`abtest`]: k-fold cross-validation, aggregation, one-way ANOVA and per-class recommendation.
//!
//! Numeric code is generic over [`Scalar`] (implemented for `f32` and `f64`);
//! the aliases below fix the precision used by the rest of the toolchain.

pub mod abtest;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod tuner;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default working precision.
pub type Real = f64;

pub type Tensor = nn::Tensor<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Parameter = nn::Parameter<f64>;
pub type Parameter32 = nn::Parameter<f32>;
pub type Optimizer = nn::Optimizer<f64>;
pub type Model = models::Model<f64>;
pub type Model32 = models::Model<f32>;
pub type Dnn = models::Dnn<f64>;
pub type TextCnn = models::TextCnn<f64>;

/// Version string embedded in every artifact this toolkit writes.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
