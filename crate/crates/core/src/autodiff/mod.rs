//! Reverse-mode differentiation over dense matrices.
//!
//! Values are `f64` matrices; vectors are `n×1` columns and scalars `1×1`.
//! A [`Trace`] is built per forward pass and discarded after [`Trace::backward`].

mod adam;
mod gradcheck;
mod params;
mod trace;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use params::{BoundParams, Checkpoint, ParamStore};
pub use trace::{Gradients, Trace, Var};

pub type Tensor = ndarray::Array2<f64>;
