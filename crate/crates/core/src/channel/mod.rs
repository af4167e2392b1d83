//! Stochastic radio-channel impairments.
//!
//! Each impairment exists twice: as a frame-level function returning the
//! realized [`ChannelDraw`], and as an operation on the autodiff tape (see
//! [`channel_on_tape`]) where the draw enters as a constant. Both routes
//! share the row primitives in this module, so a stored draw replays
//! bit-identically through either.

mod frame;

pub use frame::SignalFrame;

use std::f64::consts::TAU;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{ensure, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// How `snr_db` maps to the noise added to each real I/Q component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    /// Per-component variance `10^(-snr/10) / 2`, so the complex noise power
    /// is `10^(-snr/10)` against a unit-power signal.
    #[default]
    UnitPower,
    /// Per-component standard deviation `10^(-snr/10) / sqrt(2)`.
    LiteralStd,
}

impl NoiseConvention {
    pub fn component_std(self, snr_db: f64) -> f64 {
        let lin = 10f64.powf(-snr_db / 10.0);
        match self {
            Self::UnitPower => (lin / 2.0).sqrt(),
            Self::LiteralStd => lin / 2f64.sqrt(),
        }
    }
}

/// JSON has no infinities; they travel as the strings `"inf"` and `"-inf"`.
mod extended_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            v => s.serialize_f64(v),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(de::Error::custom(format!("expected a number, \"inf\" or \"-inf\", got {t:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// `"inf"` in JSON disables the noise level without turning `awgn` off.
    #[serde(with = "extended_float")]
    pub snr_db: f64,
    /// Spread of the time shift, in samples.
    #[serde(default)]
    pub sigma_t: f64,
    /// Spread of the time-dilation rate around 1.
    #[serde(default)]
    pub sigma_t_rate: f64,
    /// Upper bound of the uniformly drawn carrier phase, in radians.
    #[serde(default = "default_phase_max")]
    pub phase_max: f64,
    /// Spread of the carrier frequency offset, in radians per sample.
    #[serde(default)]
    pub sigma_f: f64,
    /// Length of the random delay-spread filter.
    #[serde(default = "default_taps")]
    pub n_taps: usize,
    #[serde(default = "yes")]
    pub awgn: bool,
    #[serde(default)]
    pub time_offset: bool,
    #[serde(default)]
    pub phase_offset: bool,
    #[serde(default)]
    pub delay_spread: bool,
    #[serde(default)]
    pub noise_convention: NoiseConvention,
}

fn default_phase_max() -> f64 {
    TAU
}

fn default_taps() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl ChannelConfig {
    /// Additive noise only.
    pub fn awgn(snr_db: f64) -> Self {
        Self {
            snr_db,
            sigma_t: 0.0,
            sigma_t_rate: 0.0,
            phase_max: TAU,
            sigma_f: 0.0,
            n_taps: 1,
            awgn: true,
            time_offset: false,
            phase_offset: false,
            delay_spread: false,
            noise_convention: NoiseConvention::UnitPower,
        }
    }

    /// Every impairment disabled; only power normalization remains.
    pub fn clean() -> Self {
        Self {
            awgn: false,
            ..Self::awgn(f64::INFINITY)
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.snr_db.is_nan(), Config, "snr_db must be a number");
        ensure!(self.n_taps >= 1, Config, "n_taps must be >= 1");
        for (name, v) in [
            ("sigma_t", self.sigma_t),
            ("sigma_t_rate", self.sigma_t_rate),
            ("sigma_f", self.sigma_f),
        ] {
            ensure!(v >= 0.0 && v.is_finite(), Config, "{name} must be finite and >= 0, got {v}");
        }
        ensure!(
            (0.0..=TAU).contains(&self.phase_max),
            Config,
            "phase_max must lie in [0, 2*pi], got {}",
            self.phase_max
        );
        Ok(())
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_convention.component_std(self.snr_db)
    }

    fn timing_active(&self) -> bool {
        self.time_offset && (self.sigma_t > 0.0 || self.sigma_t_rate > 0.0)
    }

    fn phase_active(&self) -> bool {
        self.phase_offset && (self.phase_max > 0.0 || self.sigma_f > 0.0)
    }

    fn noise_active(&self) -> bool {
        self.awgn && self.noise_std() > 0.0
    }
}

/// Realized random values applied to one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDraw {
    /// `[2, n]` additive noise.
    pub noise: Tensor,
    pub theta_t: f64,
    pub theta_t_rate: f64,
    pub theta_f: f64,
    pub theta_f_rate: f64,
    pub taps: Vec<f64>,
}

impl ChannelDraw {
    /// The draw of a channel that leaves the frame untouched.
    pub fn identity(n: usize) -> Self {
        Self {
            noise: Tensor::zeros(vec![2, n]),
            theta_t: 0.0,
            theta_t_rate: 1.0,
            theta_f: 0.0,
            theta_f_rate: 0.0,
            taps: vec![1.0],
        }
    }
}

/// `theta_t' <= 0.1` is redrawn.
const MIN_DILATION: f64 = 0.1;

fn draw_timing(sigma_t: f64, sigma_t_rate: f64, rng: &mut Rng) -> (f64, f64) {
    let shift = sigma_t * rng.sample::<f64, _>(StandardNormal);
    loop {
        let rate = 1.0 + sigma_t_rate * rng.sample::<f64, _>(StandardNormal);
        if rate > MIN_DILATION {
            return (shift, rate);
        }
    }
}

fn draw_phase(phase_max: f64, sigma_f: f64, rng: &mut Rng) -> (f64, f64) {
    let theta = if phase_max > 0.0 {
        rng.random_range(0.0..phase_max)
    } else {
        0.0
    };
    let rate = Normal::new(0.0, sigma_f).expect("sigma_f validated").sample(rng);
    (theta, rate)
}

fn draw_taps(n_taps: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n_taps).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn draw_noise(std: f64, n: usize, rng: &mut Rng) -> Tensor {
    let values = (0..2 * n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(vec![2, n], values).expect("2n values")
}

/// Draws every enabled impairment for one frame of `n` samples, in
/// application order. Impairments that are disabled, or enabled with zero
/// spread, consume no randomness.
pub fn draw_channel(cfg: &ChannelConfig, n: usize, rng: &mut Rng) -> Result<ChannelDraw> {
    cfg.validate()?;
    let mut draw = ChannelDraw::identity(n);
    if cfg.delay_spread {
        ensure!(cfg.n_taps <= n, Config, "n_taps {} exceeds frame length {n}", cfg.n_taps);
        draw.taps = draw_taps(cfg.n_taps, rng);
    }
    if cfg.timing_active() {
        (draw.theta_t, draw.theta_t_rate) = draw_timing(cfg.sigma_t, cfg.sigma_t_rate, rng);
    }
    if cfg.phase_active() {
        (draw.theta_f, draw.theta_f_rate) = draw_phase(cfg.phase_max, cfg.sigma_f, rng);
    }
    if cfg.noise_active() {
        draw.noise = draw_noise(cfg.noise_std(), n, rng);
    }
    Ok(draw)
}

// Row primitives shared by the frame API and the tape.

/// `out = exp(j (phase + freq k)) * (i + j q)` sample by sample.
pub(crate) fn rotate_rows(i: &[f64], q: &[f64], i_out: &mut [f64], q_out: &mut [f64], phase: f64, freq: f64) {
    for k in 0..i.len() {
        let (s, c) = (phase + freq * k as f64).sin_cos();
        i_out[k] = i[k] * c - q[k] * s;
        q_out[k] = i[k] * s + q[k] * c;
    }
}

/// `out[k] = x((k - shift) / rate)` with linear interpolation of the
/// zero-extended sequence.
pub(crate) fn warp_row(x: &[f64], out: &mut [f64], shift: f64, rate: f64) {
    let n = x.len() as isize;
    let at = |i: isize| if (0..n).contains(&i) { x[i as usize] } else { 0.0 };
    for (k, o) in out.iter_mut().enumerate() {
        let u = (k as f64 - shift) / rate;
        let i0 = u.floor();
        let fr = u - i0;
        let i0 = i0 as isize;
        *o = if fr == 0.0 {
            at(i0)
        } else {
            at(i0) * (1.0 - fr) + at(i0 + 1) * fr
        };
    }
}

/// Causal convolution truncated to the input length.
pub(crate) fn fir_row(x: &[f64], h: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let n = x.len();
    for (j, &hj) in h.iter().enumerate().take(n) {
        for (o, &v) in out[j..].iter_mut().zip(&x[..n - j]) {
            *o += hj * v;
        }
    }
}

// Frame-level operations.

/// Scales the frame to unit average power per complex sample.
pub fn normalize_power(frame: &SignalFrame) -> Result<SignalFrame> {
    let p = frame.power();
    ensure!(p > 0.0 && p.is_finite(), DegenerateInput, "cannot normalize a frame with power {p}");
    let inv = 1.0 / p.sqrt();
    frame.map(|v| v * inv)
}

pub fn add_noise(frame: &SignalFrame, noise: &Tensor) -> Result<SignalFrame> {
    ensure!(
        noise.shape() == frame.data().shape(),
        Dimension,
        "noise shape {:?} does not match frame {:?}",
        noise.shape(),
        frame.data().shape()
    );
    let v = frame.data().values().iter().zip(noise.values()).map(|(a, b)| a + b).collect();
    SignalFrame::from_tensor(Tensor::new(noise.shape().to_vec(), v)?)
}

/// Additive white Gaussian noise at `snr_db` against a unit-power frame.
pub fn awgn(frame: &SignalFrame, snr_db: f64, rng: &mut Rng) -> Result<(SignalFrame, ChannelDraw)> {
    awgn_with(frame, snr_db, NoiseConvention::UnitPower, rng)
}

pub fn awgn_with(
    frame: &SignalFrame,
    snr_db: f64,
    convention: NoiseConvention,
    rng: &mut Rng,
) -> Result<(SignalFrame, ChannelDraw)> {
    let n = frame.len();
    let mut draw = ChannelDraw::identity(n);
    let std = convention.component_std(snr_db);
    if std > 0.0 {
        draw.noise = draw_noise(std, n, rng);
    }
    Ok((add_noise(frame, &draw.noise)?, draw))
}

/// Resamples both rows at `(k - shift) / rate`.
pub fn shift_time(frame: &SignalFrame, shift: f64, rate: f64) -> Result<SignalFrame> {
    ensure!(rate > 0.0, Config, "time dilation rate must be positive, got {rate}");
    frame.map_rows(|x, out| warp_row(x, out, shift, rate))
}

pub fn time_offset(
    frame: &SignalFrame,
    sigma_t: f64,
    sigma_t_rate: f64,
    rng: &mut Rng,
) -> Result<(SignalFrame, ChannelDraw)> {
    ensure!(sigma_t >= 0.0 && sigma_t_rate >= 0.0, Config, "timing spreads must be >= 0");
    let mut draw = ChannelDraw::identity(frame.len());
    (draw.theta_t, draw.theta_t_rate) = draw_timing(sigma_t, sigma_t_rate, rng);
    Ok((shift_time(frame, draw.theta_t, draw.theta_t_rate)?, draw))
}

/// Multiplies sample `k` by `exp(j (phase + freq k))`.
pub fn rotate(frame: &SignalFrame, phase: f64, freq: f64) -> Result<SignalFrame> {
    let n = frame.len();
    let mut i = vec![0.0; n];
    let mut q = vec![0.0; n];
    rotate_rows(frame.i(), frame.q(), &mut i, &mut q, phase, freq);
    SignalFrame::new(i, q)
}

pub fn phase_freq_offset(
    frame: &SignalFrame,
    phase_max: f64,
    sigma_f: f64,
    rng: &mut Rng,
) -> Result<(SignalFrame, ChannelDraw)> {
    ensure!(
        (0.0..=TAU).contains(&phase_max) && sigma_f >= 0.0,
        Config,
        "phase_max must lie in [0, 2*pi] and sigma_f >= 0"
    );
    let mut draw = ChannelDraw::identity(frame.len());
    (draw.theta_f, draw.theta_f_rate) = draw_phase(phase_max, sigma_f, rng);
    Ok((rotate(frame, draw.theta_f, draw.theta_f_rate)?, draw))
}

/// Convolves both rows with the same real taps.
pub fn filter(frame: &SignalFrame, taps: &[f64]) -> Result<SignalFrame> {
    ensure!(!taps.is_empty(), Config, "filter needs at least one tap");
    ensure!(
        taps.len() <= frame.len(),
        Config,
        "{} taps exceed frame length {}",
        taps.len(),
        frame.len()
    );
    frame.map_rows(|x, out| fir_row(x, taps, out))
}

pub fn delay_spread(frame: &SignalFrame, n_taps: usize, rng: &mut Rng) -> Result<(SignalFrame, ChannelDraw)> {
    ensure!(n_taps >= 1, Config, "n_taps must be >= 1");
    ensure!(
        n_taps <= frame.len(),
        Config,
        "n_taps {n_taps} exceeds frame length {}",
        frame.len()
    );
    let mut draw = ChannelDraw::identity(frame.len());
    draw.taps = draw_taps(n_taps, rng);
    Ok((filter(frame, &draw.taps)?, draw))
}

/// Normalizes the frame, then applies delay spread, timing offset,
/// phase/frequency offset and noise, each only if enabled.
pub fn apply_channel(frame: &SignalFrame, cfg: &ChannelConfig, rng: &mut Rng) -> Result<(SignalFrame, ChannelDraw)> {
    let draw = draw_channel(cfg, frame.len(), rng)?;
    Ok((replay_channel(frame, cfg, &draw)?, draw))
}

/// Applies a stored draw exactly as [`apply_channel`] would have.
pub fn replay_channel(frame: &SignalFrame, cfg: &ChannelConfig, draw: &ChannelDraw) -> Result<SignalFrame> {
    cfg.validate()?;
    let mut out = normalize_power(frame)?;
    if cfg.delay_spread {
        out = filter(&out, &draw.taps)?;
    }
    if cfg.timing_active() {
        out = shift_time(&out, draw.theta_t, draw.theta_t_rate)?;
    }
    if cfg.phase_active() {
        out = rotate(&out, draw.theta_f, draw.theta_f_rate)?;
    }
    if cfg.noise_active() {
        out = add_noise(&out, &draw.noise)?;
    }
    Ok(out)
}

/// Records the impairments of `cfg` for a `[batch, 2, n]` batch of
/// unit-power frames, one draw per example.
pub fn channel_on_tape(tape: &mut Tape, x: Var, cfg: &ChannelConfig, draws: &[ChannelDraw]) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    ensure!(
        s.len() == 3 && s[1] == 2 && s[0] == draws.len(),
        Dimension,
        "channel: {} draws for a batch of shape {s:?}",
        draws.len()
    );
    let (batch, n) = (s[0], s[2]);
    let per_example = |tape: &mut Tape, f: &dyn Fn(&ChannelDraw) -> f64| {
        tape.constant(Tensor::new(vec![batch], draws.iter().map(f).collect()).expect("batch values"))
    };
    let mut y = x;
    if cfg.delay_spread {
        let t = draws[0].taps.len();
        ensure!(draws.iter().all(|d| d.taps.len() == t), Dimension, "ragged tap draws");
        let taps = tape.constant(Tensor::new(vec![batch, t], draws.iter().flat_map(|d| d.taps.clone()).collect())?);
        y = tape.fir(y, taps)?;
    }
    if cfg.timing_active() {
        let shift = per_example(tape, &|d| d.theta_t);
        let rate = per_example(tape, &|d| d.theta_t_rate);
        y = tape.time_warp(y, shift, rate)?;
    }
    if cfg.phase_active() {
        let phase = per_example(tape, &|d| d.theta_f);
        let freq = per_example(tape, &|d| d.theta_f_rate);
        y = tape.rotate(y, phase, freq, 1.0)?;
    }
    if cfg.noise_active() {
        let mut values = Vec::with_capacity(batch * 2 * n);
        for d in draws {
            ensure!(d.noise.len() == 2 * n, Dimension, "noise draw does not match frame length {n}");
            values.extend_from_slice(d.noise.values());
        }
        let noise = tape.constant(Tensor::new(vec![batch, 2, n], values)?);
        y = tape.add(y, noise)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests;
