use serde::{Deserialize, Serialize};

use super::arch::{DecodeMode, ModemArch, ModemKind, NetworkSpec};
use super::rtn::{oracle_on_tape, RtnParams, RtnStage};
use super::{BitFrame, SoftBits};
use crate::autodiff::{forward_all, Activation, Checkpoint, ForwardCtx, Layer, LayerKind, LossKind, ParamStore, Tape, Var};
use crate::channel::{channel_on_tape, ChannelConfig, ChannelDraw, SignalFrame};
use crate::error::{ensure, Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Which synchronization stage runs in front of the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtnMode {
    #[default]
    Off,
    /// The network's own estimator drives the inverse transforms.
    Learned,
    /// The realized channel draw drives the inverse transforms.
    Oracle,
}

/// Channel autoencoder: encoder, channel, optional RTN stage, decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    seed: u64,
    encoder: Vec<Layer>,
    decoder: Vec<Layer>,
    rtn: Option<RtnStage>,
    params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    spec: NetworkSpec,
    seed: u64,
}

pub fn build_autoencoder(
    arch: ModemArch,
    channel: ChannelConfig,
    loss: LossKind,
    decode_mode: DecodeMode,
    seed: u64,
) -> Result<Network> {
    Network::build(
        NetworkSpec {
            arch,
            channel,
            loss,
            decode_mode,
            rtn: None,
        },
        seed,
    )
}

fn encoder_kinds(arch: &ModemArch) -> Vec<LayerKind> {
    let act = LayerKind::Activation {
        function: arch.activation,
    };
    let dropout = LayerKind::Dropout { rate: arch.dropout };
    let n = arch.samples();
    let mut kinds = Vec::new();
    match arch.kind {
        ModemKind::Dnn => {
            let mut width = arch.n_bits;
            for &h in &arch.hidden {
                kinds.push(LayerKind::Dense {
                    inputs: width,
                    outputs: h,
                });
                kinds.push(act.clone());
                kinds.push(dropout.clone());
                width = h;
            }
            kinds.push(LayerKind::Dense {
                inputs: width,
                outputs: 2 * n,
            });
            kinds.push(LayerKind::Reshape { shape: vec![2, n] });
        }
        ModemKind::Cnn => {
            kinds.push(LayerKind::Reshape { shape: vec![1, n] });
            kinds.push(LayerKind::Conv1d {
                in_channels: 1,
                filters: arch.filters,
                kernel_len: arch.kernel_len,
            });
            kinds.push(act.clone());
            kinds.push(LayerKind::Conv1d {
                in_channels: arch.filters,
                filters: arch.filters,
                kernel_len: 1,
            });
            kinds.push(act);
            kinds.push(dropout);
            kinds.push(LayerKind::Conv1d {
                in_channels: arch.filters,
                filters: 2,
                kernel_len: arch.kernel_len,
            });
        }
    }
    kinds.push(LayerKind::NormalizePower);
    kinds
}

fn decoder_kinds(arch: &ModemArch, mode: DecodeMode) -> Vec<LayerKind> {
    let act = LayerKind::Activation {
        function: arch.activation,
    };
    let dropout = LayerKind::Dropout { rate: arch.dropout };
    let n = arch.samples();
    let mut kinds = Vec::new();
    match arch.kind {
        ModemKind::Dnn => {
            kinds.push(LayerKind::Reshape { shape: vec![2 * n] });
            let mut width = 2 * n;
            for &h in arch.hidden.iter().rev() {
                kinds.push(LayerKind::Dense {
                    inputs: width,
                    outputs: h,
                });
                kinds.push(act.clone());
                kinds.push(dropout.clone());
                width = h;
            }
            kinds.push(LayerKind::Dense {
                inputs: width,
                outputs: arch.n_bits,
            });
        }
        ModemKind::Cnn => {
            kinds.push(LayerKind::Conv1d {
                in_channels: 2,
                filters: arch.filters,
                kernel_len: arch.kernel_len,
            });
            kinds.push(act.clone());
            kinds.push(LayerKind::Conv1d {
                in_channels: arch.filters,
                filters: arch.filters,
                kernel_len: 1,
            });
            kinds.push(act);
            kinds.push(dropout);
            kinds.push(LayerKind::Conv1d {
                in_channels: arch.filters,
                filters: 1,
                kernel_len: arch.kernel_len,
            });
            kinds.push(LayerKind::Reshape {
                shape: vec![arch.n_bits],
            });
        }
    }
    if mode == DecodeMode::Hard {
        kinds.push(LayerKind::Activation {
            function: Activation::HardSigmoid,
        });
    }
    kinds
}

impl Network {
    /// Builds the network with weights drawn from a stream seeded by `seed`.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.arch.validate()?;
        spec.channel.validate()?;
        spec.loss.validate()?;
        let samples = spec.arch.samples();
        ensure!(
            !spec.channel.delay_spread || spec.channel.n_taps <= samples,
            Config,
            "n_taps {} exceeds frame length {samples}",
            spec.channel.n_taps
        );
        let mut init = rng::seeded(seed);
        let mut params = ParamStore::new();
        let mut make = |prefix: &str, kinds: Vec<LayerKind>, params: &mut ParamStore| -> Result<Vec<Layer>> {
            kinds
                .into_iter()
                .enumerate()
                .map(|(i, k)| Layer::new(format!("{prefix}.{i}"), k, params, &mut init))
                .collect()
        };
        let encoder = make("encoder", encoder_kinds(&spec.arch), &mut params)?;
        let decoder = make("decoder", decoder_kinds(&spec.arch, spec.decode_mode), &mut params)?;
        let rtn = match &spec.rtn {
            Some(cfg) => {
                cfg.validate(&spec.channel, samples)?;
                let mut rtn_init = rng::stream(seed, 1);
                Some(RtnStage::new(cfg, samples, &mut params, &mut rtn_init)?)
            }
            None => None,
        };
        Ok(Self {
            spec,
            seed,
            encoder,
            decoder,
            rtn,
            params,
        })
    }

    /// A two-layer linear network that passes bits through unchanged when the
    /// channel is clean: bit `b_k` becomes `I_k = 2 b_k - 1`, `Q_k = 0`, and
    /// the decoder maps `I_k` back to `(I_k + 1) / 2`.
    pub fn identity_toy(n_bits: usize) -> Result<Self> {
        let arch = ModemArch {
            hidden: vec![],
            ..ModemArch::dnn(n_bits)
        };
        let mut net = build_autoencoder(arch, ChannelConfig::clean(), LossKind::mse(), DecodeMode::Soft, 0)?;
        let n = n_bits;
        let mut enc_w = vec![0.0; n * 2 * n];
        let mut enc_b = vec![0.0; 2 * n];
        let mut dec_w = vec![0.0; 2 * n * n];
        let dec_b = vec![0.5; n];
        for k in 0..n {
            enc_w[k * 2 * n + k] = 2.0;
            enc_b[k] = -1.0;
            dec_w[k * n + k] = 0.5;
        }
        let set = |net: &mut Network, name: &str, shape: Vec<usize>, v: Vec<f64>| -> Result<()> {
            let id = net.params.find(name).expect("toy parameter exists");
            net.params.get_mut(id).value = Tensor::new(shape, v)?;
            Ok(())
        };
        set(&mut net, "encoder.0.weight", vec![n, 2 * n], enc_w)?;
        set(&mut net, "encoder.0.bias", vec![2 * n], enc_b)?;
        set(&mut net, "decoder.1.weight", vec![2 * n, n], dec_w)?;
        set(&mut net, "decoder.1.bias", vec![n], dec_b)?;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encoder_layers(&self) -> &[Layer] {
        &self.encoder
    }

    pub fn decoder_layers(&self) -> &[Layer] {
        &self.decoder
    }

    pub fn has_rtn(&self) -> bool {
        self.rtn.is_some()
    }

    pub(crate) fn rtn_stage(&self) -> Option<&RtnStage> {
        self.rtn.as_ref()
    }

    /// Every layer of the network in evaluation order.
    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder
            .iter()
            .chain(self.rtn.iter().flat_map(|r| r.layers.iter()))
            .chain(self.decoder.iter())
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Sets the rate of every dropout layer.
    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        ensure!(
            (0.0..1.0).contains(&rate),
            Config,
            "dropout rate must lie in [0, 1), got {rate}"
        );
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            if let LayerKind::Dropout { rate: r } = &mut layer.kind {
                *r = rate;
            }
        }
        self.spec.arch.dropout = rate;
        Ok(())
    }

    pub fn set_loss(&mut self, loss: LossKind) -> Result<()> {
        loss.validate()?;
        self.spec.loss = loss;
        Ok(())
    }

    /// Replaces the channel used for training and evaluation.
    pub fn set_channel(&mut self, channel: ChannelConfig) -> Result<()> {
        channel.validate()?;
        if let Some(cfg) = &self.spec.rtn {
            cfg.validate(&channel, self.spec.arch.samples())?;
        }
        self.spec.channel = channel;
        Ok(())
    }

    fn bits_tensor(&self, bits: &[BitFrame]) -> Result<Tensor> {
        let n = self.spec.arch.n_bits;
        ensure!(!bits.is_empty(), Input, "empty batch");
        for b in bits {
            ensure!(b.len() == n, Input, "bit frame has {} bits, network expects {n}", b.len());
        }
        Tensor::new(vec![bits.len(), n], bits.iter().flat_map(BitFrame::as_reals).collect())
    }

    fn frames_tensor(&self, frames: &[SignalFrame]) -> Result<Tensor> {
        let n = self.spec.arch.samples();
        ensure!(!frames.is_empty(), Input, "empty batch");
        for f in frames {
            ensure!(f.len() == n, Input, "frame has {} samples, network expects {n}", f.len());
        }
        Tensor::new(
            vec![frames.len(), 2, n],
            frames.iter().flat_map(|f| f.data().values().iter().copied()).collect(),
        )
    }

    /// Records the encoder; the output is a `[batch, 2, n]` unit-power frame batch.
    pub fn encode_on_tape(&self, tape: &mut Tape, bits: &[BitFrame], ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let x = tape.constant(self.bits_tensor(bits)?);
        forward_all(&self.encoder, tape, &self.params, x, ctx)
    }

    /// Records the synchronization stage selected by `mode`.
    pub fn sync_on_tape(
        &self,
        tape: &mut Tape,
        rx: Var,
        mode: RtnMode,
        draws: Option<&[ChannelDraw]>,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        match mode {
            RtnMode::Off => Ok(rx),
            RtnMode::Learned => {
                let stage = self
                    .rtn
                    .as_ref()
                    .ok_or_else(|| Error::Config("network has no rtn estimator".into()))?;
                let est = stage.estimate_on_tape(tape, &self.params, rx, ctx)?;
                stage.transform_on_tape(tape, rx, est)
            }
            RtnMode::Oracle => {
                let draws =
                    draws.ok_or_else(|| Error::Config("oracle synchronization needs the channel draws".into()))?;
                let params: Vec<RtnParams> = draws.iter().map(RtnParams::oracle).collect();
                oracle_on_tape(tape, rx, &params)
            }
        }
    }

    pub fn decode_on_tape(&self, tape: &mut Tape, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        forward_all(&self.decoder, tape, &self.params, x, ctx)
    }

    /// Full pipeline: encoder, channel with the given draws, synchronization,
    /// decoder. Returns the `[batch, n_bits]` soft outputs.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bits: &[BitFrame],
        channel: &ChannelConfig,
        draws: &[ChannelDraw],
        mode: RtnMode,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let tx = self.encode_on_tape(tape, bits, ctx)?;
        let rx = channel_on_tape(tape, tx, channel, draws)?;
        let synced = self.sync_on_tape(tape, rx, mode, Some(draws), ctx)?;
        self.decode_on_tape(tape, synced, ctx)
    }

    /// Evaluation-mode pipeline returning one soft output per frame.
    pub fn evaluate(
        &self,
        bits: &[BitFrame],
        channel: &ChannelConfig,
        draws: &[ChannelDraw],
        mode: RtnMode,
    ) -> Result<Vec<SoftBits>> {
        let mut tape = Tape::new();
        let mut r = eval_ctx_rng();
        let mut ctx = ForwardCtx {
            training: false,
            rng: &mut r,
        };
        let y = self.forward(&mut tape, bits, channel, draws, mode, &mut ctx)?;
        Ok(tape
            .value(y)
            .values()
            .chunks(self.spec.arch.n_bits)
            .map(|c| SoftBits(c.to_vec()))
            .collect())
    }

    pub fn loss_on_tape(&self, tape: &mut Tape, soft: Var, bits: &[BitFrame]) -> Result<Var> {
        let targets: Vec<f64> = bits.iter().flat_map(BitFrame::as_reals).collect();
        tape.loss(soft, &targets, self.spec.loss)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::to_value(Metadata {
            spec: self.spec.clone(),
            seed: self.seed,
        })?;
        Ok(self.params.to_checkpoint(meta))
    }

    /// Rebuilds the architecture recorded in the checkpoint metadata and loads
    /// its parameters.
    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        let meta: Metadata = serde_json::from_value(cp.metadata.clone())?;
        let mut net = Network::build(meta.spec, meta.seed)?;
        net.params.load(cp)?;
        Ok(net)
    }
}

fn eval_ctx_rng() -> rng::Rng {
    rng::seeded(0)
}

/// Encodes bit frames in evaluation mode.
pub fn encode(net: &Network, bits: &[BitFrame]) -> Result<Vec<SignalFrame>> {
    let mut tape = Tape::new();
    let mut r = eval_ctx_rng();
    let mut ctx = ForwardCtx {
        training: false,
        rng: &mut r,
    };
    let y = net.encode_on_tape(&mut tape, bits, &mut ctx)?;
    let n = net.spec.arch.samples();
    tape.value(y)
        .values()
        .chunks(2 * n)
        .map(|c| SignalFrame::from_tensor(Tensor::new(vec![2, n], c.to_vec())?))
        .collect()
}

/// Decodes received frames in evaluation mode, through the network's own
/// synchronization stage when it has one.
pub fn decode(net: &Network, frames: &[SignalFrame]) -> Result<Vec<SoftBits>> {
    let mut tape = Tape::new();
    let mut r = eval_ctx_rng();
    let mut ctx = ForwardCtx {
        training: false,
        rng: &mut r,
    };
    let x = tape.constant(net.frames_tensor(frames)?);
    let mode = if net.has_rtn() { RtnMode::Learned } else { RtnMode::Off };
    let synced = net.sync_on_tape(&mut tape, x, mode, None, &mut ctx)?;
    let y = net.decode_on_tape(&mut tape, synced, &mut ctx)?;
    Ok(tape
        .value(y)
        .values()
        .chunks(net.spec.arch.n_bits)
        .map(|c| SoftBits(c.to_vec()))
        .collect())
}
