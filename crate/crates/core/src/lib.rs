//! Channel autoencoders for learned binary modulation.
//!
//! An encoder network maps bit frames to complex baseband samples, a
//! differentiable channel applies noise and synchronization impairments,
//! and a decoder recovers bit likelihoods. The whole chain is trained by
//! reverse-mode differentiation and evaluated as bit error rate against
//! analytic QPSK and QAM16 curves.

pub mod autodiff;
pub mod baselines;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod gradsuite;
pub mod modem;
pub mod rng;
pub mod tensor;

pub use autodiff::{Activation, LossFn, LossKind, OptimizerConfig, OptimizerKind, ParamStore, Tape, Var};
pub use channel::{ChannelConfig, ChannelDraw, NoiseConvention, SignalFrame};
pub use error::{Error, Result};
pub use modem::{BitFrame, DecodeMode, ModemArch, Network, RtnParams, SoftBits};
pub use tensor::Tensor;
