//! Dense storage, differentiable blocks, optimizers, and finite-difference
//! gradient verification.

mod checkpoint;
pub mod gradcheck;
pub mod ops;
mod optim;
mod param;
pub mod rng;
mod tensor;

pub use checkpoint::{Checkpoint, SavedGroup};
pub use gradcheck::{grad_check, Evaluation, GradCheckOptions, GradCheckReport, GroupReport};
pub use optim::{adam_step, gradient_step, AdamState};
pub use param::{GradBuffer, GroupId, ParamGroup, ParamStore};
pub use tensor::Tensor;
