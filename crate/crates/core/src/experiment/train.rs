use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::autodiff::{ForwardCtx, LossKind, OptimizerConfig, OptimizerState, Tape};
use crate::channel::{draw_channel, ChannelConfig, ChannelDraw};
use crate::error::{ensure, Error, Result};
use crate::modem::{BitFrame, Network, RtnMode};
use crate::rng;

const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Replaces the network's loss when set.
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerConfig,
    /// Replaces the network's dropout rate when set.
    #[serde(default)]
    pub dropout: Option<f64>,
    /// Training SNR; the network's channel SNR when unset.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch() -> usize {
    64
}

fn default_optimizer() -> OptimizerConfig {
    OptimizerConfig::adam(1e-3)
}

impl TrainConfig {
    /// 20 epochs of batch-64 Adam at learning rate 1e-3.
    pub fn desk(seed: u64) -> Self {
        Self {
            epochs: 20,
            batch_size: default_batch(),
            loss: None,
            optimizer: default_optimizer(),
            dropout: None,
            snr_db: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, Config, "epochs must be at least 1");
        ensure!(self.batch_size >= 1, Config, "batch_size must be at least 1");
        self.optimizer.validate()?;
        if let Some(loss) = &self.loss {
            loss.validate()?;
        }
        if let Some(d) = self.dropout {
            ensure!((0.0..1.0).contains(&d), Config, "dropout must lie in [0, 1), got {d}");
        }
        if let Some(s) = self.snr_db {
            ensure!(!s.is_nan(), Config, "training snr_db is NaN");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Validation loss of the untrained network.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub network: Network,
    pub history: TrainHistory,
}

fn validation_loss(
    net: &Network,
    channel: &ChannelConfig,
    frames: &[BitFrame],
    draws: &[ChannelDraw],
    mode: RtnMode,
) -> Result<f64> {
    let mut total = 0.0;
    let mut r = rng::seeded(0);
    for (bits, d) in frames.chunks(EVAL_BATCH).zip(draws.chunks(EVAL_BATCH)) {
        let mut tape = Tape::new();
        let mut ctx = ForwardCtx {
            training: false,
            rng: &mut r,
        };
        let soft = net.forward(&mut tape, bits, channel, d, mode, &mut ctx)?;
        let loss = net.loss_on_tape(&mut tape, soft, bits)?;
        total += tape.value(loss).values()[0] * bits.len() as f64;
    }
    Ok(total / frames.len() as f64)
}

// Overflowing weights surface as a degenerate frame power before the loss
// itself turns non-finite.
fn overflow_as_divergence(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::DegenerateInput(_) => Error::Divergence {
            epoch,
            batch,
            loss: f64::NAN,
        },
        e => e,
    }
}

/// Mini-batch training with fresh channel draws for every example in every
/// epoch. The validation set sees one fixed set of draws so epochs are
/// comparable; the parameters with the lowest validation loss are returned.
pub fn train(mut net: Network, data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    ensure!(
        data.n_bits == net.spec().arch.n_bits,
        Input,
        "dataset frames have {} bits, network expects {}",
        data.n_bits,
        net.spec().arch.n_bits
    );
    ensure!(!data.test.is_empty() && !data.train.is_empty(), Input, "dataset split is empty");
    if let Some(loss) = cfg.loss {
        net.set_loss(loss)?;
    }
    if let Some(d) = cfg.dropout {
        net.set_dropout(d)?;
    }
    let mut channel = net.spec().channel.clone();
    if let Some(s) = cfg.snr_db {
        channel.snr_db = s;
    }
    channel.validate()?;
    let n = net.spec().arch.samples();
    let mode = if net.has_rtn() { RtnMode::Learned } else { RtnMode::Off };

    let mut val_rng = rng::stream(cfg.seed, 2);
    let val_draws = data
        .test
        .iter()
        .map(|_| draw_channel(&channel, n, &mut val_rng))
        .collect::<Result<Vec<_>>>()?;
    let initial_val_loss = validation_loss(&net, &channel, &data.test, &val_draws, mode)?;

    let mut r = rng::stream(cfg.seed, 1);
    let mut opt = OptimizerState::new(cfg.optimizer, net.params())?;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, crate::autodiff::ParamStore)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let bits: Vec<BitFrame> = idx.iter().map(|&i| data.train[i].clone()).collect();
            let draws = idx
                .iter()
                .map(|_| draw_channel(&channel, n, &mut r))
                .collect::<Result<Vec<_>>>()?;
            let mut tape = Tape::new();
            let mut ctx = ForwardCtx {
                training: true,
                rng: &mut r,
            };
            let soft = net
                .forward(&mut tape, &bits, &channel, &draws, mode, &mut ctx)
                .map_err(|e| overflow_as_divergence(e, epoch, batch))?;
            let loss = net.loss_on_tape(&mut tape, soft, &bits)?;
            let value = tape.value(loss).values()[0];
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch,
                    loss: value,
                });
            }
            total += value * bits.len() as f64;
            tape.backward(loss, net.params_mut())?;
            opt.step(net.params_mut())?;
        }
        let val_loss = validation_loss(&net, &channel, &data.test, &val_draws, mode)
            .map_err(|e| overflow_as_divergence(e, epoch, 0))?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                loss: val_loss,
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: total / data.train.len() as f64,
            val_loss,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, net.params().clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    *net.params_mut() = params;
    for p in net.params_mut().iter_mut() {
        p.grad = None;
    }
    Ok(Trained {
        network: net,
        history: TrainHistory {
            initial_val_loss,
            epochs,
            best_epoch,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::LossFn;
    use crate::experiment::generate_dataset;
    use crate::modem::{build_autoencoder, DecodeMode, ModemArch};

    fn small_net(seed: u64) -> Network {
        let arch = ModemArch {
            filters: 4,
            kernel_len: 3,
            ..ModemArch::cnn(8)
        };
        build_autoencoder(arch, ChannelConfig::awgn(5.0), LossKind::mse(), DecodeMode::Soft, seed).unwrap()
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let net = small_net(1);
        let data = generate_dataset(40, 8, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            optimizer: OptimizerConfig::adam(0.0),
            ..TrainConfig::desk(3)
        };
        let out = train(net.clone(), &data, &cfg).unwrap();
        assert_eq!(out.history.epochs.len(), 1);
        for (a, b) in out.network.params().iter().zip(net.params().iter()) {
            assert_eq!(a.1.value, b.1.value);
        }
    }

    #[test]
    fn identical_seeds_give_identical_histories() {
        let data = generate_dataset(60, 8, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 16,
            dropout: Some(0.2),
            ..TrainConfig::desk(5)
        };
        let a = train(small_net(6), &data, &cfg).unwrap();
        let b = train(small_net(6), &data, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn rejects_bad_configs() {
        let data = generate_dataset(20, 8, 1).unwrap();
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::desk(0)
        };
        assert!(matches!(train(small_net(0), &data, &bad), Err(Error::Config(_))));
        let wide = generate_dataset(20, 16, 1).unwrap();
        assert!(matches!(
            train(small_net(0), &wide, &TrainConfig::desk(0)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let data = generate_dataset(40, 8, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            loss: Some(LossKind::new(LossFn::Clmee)),
            optimizer: OptimizerConfig::rmsprop(1e300),
            ..TrainConfig::desk(0)
        };
        let err = train(small_net(0), &data, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err}");
    }
}
