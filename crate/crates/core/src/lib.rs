//! Multivariate time-series forecasting with TSMixer and two KAN-augmented
//! variants, built on a small dense-tensor core with hand-written backward
//! passes.
//!
//! Layout:
//! - [`tensor`]: `f64` tensors and differentiable primitives
//! - [`spline`]: uniform knot grids and B-spline basis evaluation
//! - [`kan`]: KAN layers and the two-depth KAN stack
//! - [`mixer`]: mixer blocks and the three forecasting models
//! - [`training`]: standardization, windowing, Adam, early stopping, metrics
//! - [`data_io`]: CSV ingestion, dataset registry and run configs
//! - [`checkpoint`]: self-describing model checkpoints
//! - [`cli`]: the `train` / `eval` / `gradcheck` / `benchmark` commands

pub mod checkpoint;
pub mod cli;
pub mod data_io;
pub mod error;
pub mod kan;
pub mod mixer;
pub mod params;
pub mod spline;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use kan::{KanLayer, TwoDepthKan};
pub use mixer::{ForecastModel, LossKind, ModelConfig, Variant};
pub use params::Parameters;
pub use spline::KnotGrid;
pub use tensor::Tensor;
