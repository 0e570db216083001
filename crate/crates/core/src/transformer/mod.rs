//! Bidirectional transformer encoder with additive attention masking,
//! hand-written backward pass, Adam, and a binary checkpoint format.
//!
//! All numerics are generic over [`Float`] so the same code trains in `f32`
//! and is gradient-checked in `f64`.

mod adam;
mod checkpoint;
mod gradcheck;
mod model;
mod params;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::FromPrimitive;
use thiserror::Error;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, MAGIC};
pub use gradcheck::{check_gradients, CoordinateCheck};
pub use model::{
    attention_output, attention_scores, backward, compute_gradients, forward, Activations, ModelInput, Objective,
    SumObjective,
};
pub use params::{init_params, LayerParams, ModelConfig, ModelParams};

/// Scalar type the encoder runs on.
pub trait Float:
    num_traits::Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
}

impl Float for f32 {}
impl Float for f64 {}

pub(crate) fn cst<T: Float>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss is not finite")]
    NonFiniteLoss,
}
