//! Minimal reverse-mode differentiation engine: a recording tape, the
//! layers and losses the modem networks are built from, and the Adam and
//! RMSprop optimizers.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod params;
pub mod tape;

pub use gradcheck::{grad_check, grad_check_probes, relative_error, GradCheckReport};
pub use layers::{dropout_forward, forward_all, ForwardCtx, Layer, LayerKind};
pub use loss::{loss_value, LossFn, LossKind};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{glorot_uniform, Checkpoint, Param, ParamId, ParamStore};
pub use tape::{inject_backward_fault, Activation, Gradients, Tape, Var};
