//! Interaction Information Auto-Encoder (IIAE).
//!
//! A variational model over paired two-domain data `(x, y)` that factors each
//! pair into a shared code `z_s` and domain-exclusive codes `z_x`, `z_y`. The
//! training objective augments the ELBO with an interaction-information
//! regularizer whose tractable bound introduces single-view shared encoders
//! `r_x(z_s|x)` and `r_y(z_s|y)`; those encoders are what retrieval and
//! translation use at inference time.
//!
//! The numeric core is generic over [`Scalar`] (`f32` for training, `f64` for
//! verification). Concrete aliases for both precisions live at the crate root.

pub mod data;
pub mod diffmath;
pub mod error;
pub mod evaltasks;
pub mod io;
pub mod model;
pub mod objective;
pub mod scalar;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use diffmath::{Activation, DenseNet, GaussianParams, Matrix};
pub use model::{ArchConfig, IIAEModel, ModelDims};
pub use objective::{LossBreakdown, LossParams, Objective};
pub use trainer::TrainConfig;

/// Single-precision model, the training default.
pub type ModelF32 = IIAEModel<f32>;
/// Double-precision model, used by the verification suites.
pub type ModelF64 = IIAEModel<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type MatrixF64 = Matrix<f64>;
pub type DenseNetF32 = DenseNet<f32>;
pub type DenseNetF64 = DenseNet<f64>;
pub type GaussianF64 = GaussianParams<f64>;
