use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::sweep::{ber_sweep, BerCurve, SweepConfig};
use super::train::{train, TrainConfig, TrainHistory};
use crate::error::{ensure, Error, Result};
use crate::modem::{Network, NetworkSpec, RtnConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    /// Grid values are training SNRs in dB.
    TrainingSnr,
    /// Grid values are dropout rates.
    Dropout,
    /// Grid values are channel tap counts.
    DelaySpread,
    /// Grid values are maximum initial phases in radians.
    RandomPhase,
}

impl StudyKind {
    fn key(self) -> &'static str {
        match self {
            StudyKind::TrainingSnr => "train_snr_db",
            StudyKind::Dropout => "dropout",
            StudyKind::DelaySpread => "n_taps",
            StudyKind::RandomPhase => "phase_max",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyKind::TrainingSnr => "training_snr",
            StudyKind::Dropout => "dropout",
            StudyKind::DelaySpread => "delay_spread",
            StudyKind::RandomPhase => "random_phase",
        })
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "training_snr" => StudyKind::TrainingSnr,
            "dropout" => StudyKind::Dropout,
            "delay_spread" => StudyKind::DelaySpread,
            "random_phase" => StudyKind::RandomPhase,
            _ => {
                return Err(Error::Config(format!(
                    "unknown study kind {s:?} (expected training_snr, dropout, delay_spread or random_phase)"
                )))
            }
        })
    }
}

/// Shared settings of a study: every grid value starts from the same spec,
/// initialization seed, dataset, training and sweep settings.
#[derive(Debug, Clone)]
pub struct StudyBase {
    pub spec: NetworkSpec,
    pub init_seed: u64,
    pub data: Dataset,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone)]
pub struct StudyCurve {
    pub value: f64,
    pub curve: BerCurve,
    pub history: TrainHistory,
    pub network: Network,
}

fn configure(kind: StudyKind, value: f64, base: &StudyBase) -> Result<(NetworkSpec, TrainConfig)> {
    let mut spec = base.spec.clone();
    let mut tc = base.train.clone();
    match kind {
        StudyKind::TrainingSnr => tc.snr_db = Some(value),
        StudyKind::Dropout => {
            spec.arch.dropout = value;
            tc.dropout = None;
        }
        StudyKind::DelaySpread => {
            ensure!(
                value >= 1.0 && value.fract() == 0.0,
                Config,
                "delay_spread grid values must be positive integers, got {value}"
            );
            spec.channel.delay_spread = true;
            spec.channel.n_taps = value as usize;
        }
        StudyKind::RandomPhase => {
            spec.channel.phase_offset = true;
            spec.channel.phase_max = value;
        }
    }
    if let Some(rtn) = &spec.rtn {
        spec.rtn = Some(RtnConfig {
            filters: rtn.filters,
            kernel_len: rtn.kernel_len,
            hidden: rtn.hidden,
            ..RtnConfig::for_channel(&spec.channel)
        });
    }
    Ok((spec, tc))
}

/// Trains and sweeps one model per grid value. Models are independent and
/// run in parallel; results come back in grid order.
pub fn study(kind: StudyKind, grid: &[f64], base: &StudyBase) -> Result<Vec<StudyCurve>> {
    ensure!(!grid.is_empty(), Config, "study grid is empty");
    grid.par_iter()
        .map(|&value| {
            let (spec, tc) = configure(kind, value, base)?;
            let net = Network::build(spec, base.init_seed)?;
            let trained = train(net, &base.data, &tc)?;
            let channel = trained.network.spec().channel.clone();
            let mut curve = ber_sweep(&trained.network, &channel, &base.sweep)?;
            curve.label = format!("{}={value}", kind.key());
            Ok(StudyCurve {
                value,
                curve,
                history: trained.history,
                network: trained.network,
            })
        })
        .collect()
}
