use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, LossKind};
use crate::channel::ChannelConfig;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModemKind {
    Dnn,
    Cnn,
}

/// Linear decoder output (soft likelihoods) or hard-sigmoid output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Soft,
    Hard,
}

/// Encoder/decoder architecture.
///
/// * `dnn` encoder: `dense(h) -> act` per hidden width, then a linear
///   `dense(2 * samples)`; the decoder mirrors it.
/// * `cnn` encoder: `conv1d(filters, k) -> act -> conv1d(filters, 1) -> act
///   -> conv1d(2, k)`; the decoder is `conv1d(filters, k) -> act ->
///   conv1d(filters, 1) -> act -> conv1d(1, k)`. The width-1 convolutions are
///   dense hidden units shared across sample positions.
///
/// Both encoders end with power normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModemArch {
    pub kind: ModemKind,
    pub n_bits: usize,
    /// Complex samples per frame; defaults to one per bit.
    #[serde(default)]
    pub samples_per_frame: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_filters")]
    pub filters: usize,
    #[serde(default = "default_kernel")]
    pub kernel_len: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![512]
}
fn default_filters() -> usize {
    16
}
fn default_kernel() -> usize {
    8
}
fn default_activation() -> Activation {
    Activation::Tanh
}

impl ModemArch {
    pub fn dnn(n_bits: usize) -> Self {
        Self {
            kind: ModemKind::Dnn,
            n_bits,
            samples_per_frame: None,
            hidden: default_hidden(),
            filters: default_filters(),
            kernel_len: default_kernel(),
            activation: default_activation(),
            dropout: 0.0,
        }
    }

    pub fn cnn(n_bits: usize) -> Self {
        Self {
            kind: ModemKind::Cnn,
            ..Self::dnn(n_bits)
        }
    }

    pub fn samples(&self) -> usize {
        self.samples_per_frame.unwrap_or(self.n_bits)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_bits >= 1, Config, "n_bits must be >= 1");
        ensure!(self.samples() >= 1, Config, "samples_per_frame must be >= 1");
        ensure!(
            (0.0..1.0).contains(&self.dropout),
            Config,
            "dropout must lie in [0, 1), got {}",
            self.dropout
        );
        match self.kind {
            ModemKind::Dnn => {
                ensure!(self.hidden.iter().all(|&h| h > 0), Config, "hidden widths must be positive");
            }
            ModemKind::Cnn => {
                ensure!(
                    self.samples() == self.n_bits,
                    Config,
                    "cnn modems need samples_per_frame == n_bits"
                );
                ensure!(self.filters > 0, Config, "filters must be positive");
                ensure!(
                    self.kernel_len >= 1 && self.kernel_len <= self.n_bits,
                    Config,
                    "kernel_len must lie in 1..=n_bits"
                );
            }
        }
        Ok(())
    }
}

/// Estimator heads and size of the synchronization stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RtnConfig {
    #[serde(default)]
    pub phase: bool,
    #[serde(default)]
    pub freq: bool,
    #[serde(default)]
    pub time: bool,
    /// Equalizer length; 0 disables the equalizer.
    #[serde(default)]
    pub eq_taps: usize,
    #[serde(default = "default_filters")]
    pub filters: usize,
    #[serde(default = "default_kernel")]
    pub kernel_len: usize,
    #[serde(default = "default_rtn_hidden")]
    pub hidden: usize,
}

fn default_rtn_hidden() -> usize {
    64
}

impl RtnConfig {
    /// One head per impairment enabled in `cfg`; the equalizer gets
    /// `cfg.n_taps` taps.
    pub fn for_channel(cfg: &ChannelConfig) -> Self {
        Self {
            phase: cfg.phase_offset,
            freq: cfg.phase_offset && cfg.sigma_f > 0.0,
            time: cfg.time_offset,
            eq_taps: if cfg.delay_spread { cfg.n_taps } else { 0 },
            filters: default_filters(),
            kernel_len: default_kernel(),
            hidden: default_rtn_hidden(),
        }
    }

    pub fn outputs(&self) -> usize {
        usize::from(self.phase) + usize::from(self.freq) + usize::from(self.time) + self.eq_taps
    }

    pub fn validate(&self, cfg: &ChannelConfig, samples: usize) -> Result<()> {
        ensure!(self.outputs() > 0, Config, "rtn estimator has no parameter heads");
        ensure!(
            !(self.phase || self.freq) || cfg.phase_offset,
            Config,
            "rtn estimates phase/frequency but the channel has no phase offset"
        );
        ensure!(
            !self.time || cfg.time_offset,
            Config,
            "rtn estimates timing but the channel has no time offset"
        );
        ensure!(
            self.eq_taps == 0 || cfg.delay_spread,
            Config,
            "rtn equalizes but the channel has no delay spread"
        );
        ensure!(self.eq_taps <= samples, Config, "eq_taps exceeds frame length");
        ensure!(
            self.filters > 0 && self.hidden > 0 && self.kernel_len >= 1 && self.kernel_len <= samples,
            Config,
            "invalid rtn estimator sizes"
        );
        Ok(())
    }
}

/// Everything needed to rebuild a network; stored in checkpoint metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub arch: ModemArch,
    pub channel: ChannelConfig,
    pub loss: LossKind,
    #[serde(default)]
    pub decode_mode: DecodeMode,
    #[serde(default)]
    pub rtn: Option<RtnConfig>,
}
