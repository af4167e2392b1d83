use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, ChannelConfig};
use crate::error::{ensure, Result};
use crate::modem::{slice_bits, BitFrame, Network, RtnMode};
use crate::rng;

const SWEEP_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bits_tested: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// The bit budget ran out before `min_errors` errors were seen.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub label: String,
    pub config_hash: String,
    pub points: Vec<BerPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    #[serde(default = "default_max_bits")]
    pub max_bits: u64,
    #[serde(default)]
    pub seed: u64,
    /// Synchronization stage; the network's own estimator when it has one.
    #[serde(default)]
    pub rtn: Option<RtnMode>,
}

fn default_min_errors() -> u64 {
    100
}

fn default_max_bits() -> u64 {
    1_000_000
}

impl SweepConfig {
    pub fn new(snr_db: Vec<f64>, seed: u64) -> Self {
        Self {
            snr_db,
            min_errors: default_min_errors(),
            max_bits: default_max_bits(),
            seed,
            rtn: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.snr_db.is_empty(), Config, "sweep needs at least one snr_db value");
        ensure!(
            self.snr_db.iter().all(|s| !s.is_nan()),
            Config,
            "sweep snr_db contains NaN"
        );
        ensure!(self.min_errors >= 10, Config, "min_errors must be at least 10");
        ensure!(self.max_bits >= 1, Config, "max_bits must be positive");
        Ok(())
    }
}

/// FNV-1a digest of the network spec, channel and sweep settings.
pub fn config_hash(net: &Network, channel: &ChannelConfig, sweep: &SweepConfig) -> Result<String> {
    let text = serde_json::to_string(&(net.spec(), channel, sweep))?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

/// Measures BER at each SNR. Every point streams random frames through
/// encoder, channel, synchronization and decoder until `min_errors` bit
/// errors or `max_bits` bits have been counted (checked after each batch).
/// Points run in parallel on independent streams of `sweep.seed`.
pub fn ber_sweep(net: &Network, channel: &ChannelConfig, sweep: &SweepConfig) -> Result<BerCurve> {
    sweep.validate()?;
    channel.validate()?;
    let mode = sweep
        .rtn
        .unwrap_or(if net.has_rtn() { RtnMode::Learned } else { RtnMode::Off });
    let points = sweep
        .snr_db
        .par_iter()
        .enumerate()
        .map(|(i, &snr)| {
            let cfg = ChannelConfig {
                snr_db: snr,
                ..channel.clone()
            };
            measure_point(net, &cfg, sweep, mode, &mut rng::stream(sweep.seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BerCurve {
        label: "model".into(),
        config_hash: config_hash(net, channel, sweep)?,
        points,
    })
}

fn measure_point(
    net: &Network,
    cfg: &ChannelConfig,
    sweep: &SweepConfig,
    mode: RtnMode,
    r: &mut rng::Rng,
) -> Result<BerPoint> {
    let n_bits = net.spec().arch.n_bits;
    let samples = net.spec().arch.samples();
    let gamma = net.spec().loss.gamma;
    let (mut bits_tested, mut bit_errors) = (0u64, 0u64);
    while bit_errors < sweep.min_errors && bits_tested < sweep.max_bits {
        let left = (sweep.max_bits - bits_tested).div_ceil(n_bits as u64);
        let frames = SWEEP_BATCH.min(left as usize);
        let bits: Vec<BitFrame> = (0..frames).map(|_| BitFrame::random(n_bits, r)).collect();
        let draws = (0..frames)
            .map(|_| draw_channel(cfg, samples, r))
            .collect::<Result<Vec<_>>>()?;
        let soft = net.evaluate(&bits, cfg, &draws, mode)?;
        for (b, s) in bits.iter().zip(&soft) {
            bit_errors += b.errors_against(&slice_bits(s, gamma));
        }
        bits_tested += (frames * n_bits) as u64;
    }
    Ok(BerPoint {
        snr_db: cfg.snr_db,
        bits_tested,
        bit_errors,
        ber: bit_errors as f64 / bits_tested as f64,
        capped: bit_errors < sweep.min_errors,
    })
}
