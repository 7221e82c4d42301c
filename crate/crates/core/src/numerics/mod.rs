//! Dense tensors, reverse-mode differentiation, Adam and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod param;
pub mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{grad_check, grad_check_report, GradCheckConfig, GradCheckReport, GraphObjective, Objective};
pub use graph::{Graph, Var};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tensor::{cross_entropy, gelu, layer_norm, Tensor, LAYER_NORM_EPS};
