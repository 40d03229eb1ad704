//! Minimal reverse-mode differentiation and optimization toolkit: enough for
//! an embedding + GRU + ReLU-stack architecture with two heads.

pub mod gradcheck;
pub mod store;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_STEP};
pub use store::{AdamConfig, Gradients, Param, ParamStore};
pub use tape::{softmax_temperature, NodeId, Tape};
pub use tensor::Tensor;
