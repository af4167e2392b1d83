use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::params::{glorot_uniform, ParamId, ParamStore};
use super::tape::{Activation, Tape, Var};
use crate::error::{ensure, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv1d {
        in_channels: usize,
        filters: usize,
        kernel_len: usize,
    },
    Activation {
        function: Activation,
    },
    Dropout {
        rate: f64,
    },
    /// Reshapes each example; the batch axis is kept.
    Reshape {
        shape: Vec<usize>,
    },
    NormalizePower,
}

impl LayerKind {
    /// Names of all layer kinds, as used in serialized configs.
    pub const NAMES: [&'static str; 6] = ["dense", "conv1d", "activation", "dropout", "reshape", "normalize_power"];

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv1d { .. } => "conv1d",
            LayerKind::Activation { .. } => "activation",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Reshape { .. } => "reshape",
            LayerKind::NormalizePower => "normalize_power",
        }
    }
}

/// One differentiable stage of a network with its registered parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    params: Vec<ParamId>,
}

/// Per-pass settings shared by every layer.
pub struct ForwardCtx<'a> {
    pub training: bool,
    pub rng: &'a mut Rng,
}

impl Layer {
    /// Creates the layer and registers `<name>.weight` / `<name>.bias` (or
    /// `<name>.kernel` / `<name>.bias`) with Glorot-uniform weights and zero biases.
    pub fn new(name: impl Into<String>, kind: LayerKind, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        let name = name.into();
        let params = match &kind {
            LayerKind::Dense { inputs, outputs } => {
                ensure!(*inputs > 0 && *outputs > 0, Config, "{name}: dense sizes must be positive");
                let w = glorot_uniform(vec![*inputs, *outputs], *inputs, *outputs, rng);
                vec![
                    store.add(format!("{name}.weight"), w)?,
                    store.add(format!("{name}.bias"), Tensor::zeros(vec![*outputs]))?,
                ]
            }
            LayerKind::Conv1d {
                in_channels,
                filters,
                kernel_len,
            } => {
                ensure!(
                    *in_channels > 0 && *filters > 0 && *kernel_len > 0,
                    Config,
                    "{name}: conv1d sizes must be positive"
                );
                let k = glorot_uniform(
                    vec![*filters, *in_channels, *kernel_len],
                    in_channels * kernel_len,
                    filters * kernel_len,
                    rng,
                );
                vec![
                    store.add(format!("{name}.kernel"), k)?,
                    store.add(format!("{name}.bias"), Tensor::zeros(vec![*filters]))?,
                ]
            }
            LayerKind::Dropout { rate } => {
                check_rate(*rate)?;
                vec![]
            }
            LayerKind::Activation { .. } | LayerKind::Reshape { .. } | LayerKind::NormalizePower => vec![],
        };
        Ok(Self { name, kind, params })
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        match &self.kind {
            LayerKind::Dense { .. } => {
                let w = tape.param(store, self.params[0]);
                let b = tape.param(store, self.params[1]);
                tape.dense(x, w, b)
            }
            LayerKind::Conv1d { .. } => {
                let k = tape.param(store, self.params[0]);
                let b = tape.param(store, self.params[1]);
                tape.conv1d(x, k, b)
            }
            LayerKind::Activation { function } => Ok(tape.activation(x, *function)),
            LayerKind::Dropout { rate } => dropout_forward(tape, x, *rate, ctx.training, ctx.rng),
            LayerKind::Reshape { shape } => {
                let batch = tape.shape(x)[0];
                let mut full = vec![batch];
                full.extend_from_slice(shape);
                tape.reshape(x, full)
            }
            LayerKind::NormalizePower => tape.normalize_power(x),
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    ensure!(
        (0.0..1.0).contains(&rate),
        Config,
        "dropout rate must lie in [0, 1), got {rate}"
    );
    Ok(())
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`; in
/// evaluation mode (or with `rate == 0`) the input passes through unchanged.
pub fn dropout_forward(tape: &mut Tape, x: Var, rate: f64, training: bool, rng: &mut Rng) -> Result<Var> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..tape.value(x).len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    tape.mask(x, mask)
}

/// Runs a sequence of layers.
pub fn forward_all(
    layers: &[Layer],
    tape: &mut Tape,
    store: &ParamStore,
    mut x: Var,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Var> {
    for layer in layers {
        x = layer.forward(tape, store, x, ctx)?;
    }
    Ok(x)
}
