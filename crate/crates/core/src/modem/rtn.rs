use serde::{Deserialize, Serialize};

use super::arch::RtnConfig;
use super::network::Network;
use crate::autodiff::{Activation, ForwardCtx, Layer, LayerKind, ParamStore, Tape, Var};
use crate::channel::{self, ChannelDraw, SignalFrame};
use crate::error::{ensure, Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Synchronization parameters the receiver inverts before decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtnParams {
    /// Carrier phase, radians.
    pub phase: f64,
    /// Carrier frequency offset, radians per sample.
    pub freq: f64,
    /// Arrival delay, samples.
    pub time_shift: f64,
    /// Equalizer taps; empty or `[1.0]` leaves the frame unfiltered.
    pub taps: Vec<f64>,
}

impl RtnParams {
    pub fn identity() -> Self {
        Self {
            phase: 0.0,
            freq: 0.0,
            time_shift: 0.0,
            taps: vec![1.0],
        }
    }

    /// Exact phase, frequency and delay of a channel draw (no equalization).
    pub fn oracle(draw: &ChannelDraw) -> Self {
        Self {
            phase: draw.theta_f,
            freq: draw.theta_f_rate,
            time_shift: draw.theta_t,
            taps: vec![1.0],
        }
    }

    fn validate(&self) -> Result<()> {
        ensure!(
            self.phase.is_finite()
                && self.freq.is_finite()
                && self.time_shift.is_finite()
                && self.taps.iter().all(|t| t.is_finite()),
            Input,
            "rtn parameters must be finite"
        );
        Ok(())
    }
}

/// Undoes the channel in reverse order: derotation by `-(phase + freq k)`,
/// a time shift by `-time_shift`, then equalizer filtering.
pub fn rtn_transform(frame: &SignalFrame, params: &RtnParams) -> Result<SignalFrame> {
    params.validate()?;
    let mut out = channel::rotate(frame, -params.phase, -params.freq)?;
    if params.time_shift != 0.0 {
        out = channel::shift_time(&out, -params.time_shift, 1.0)?;
    }
    if !params.taps.is_empty() && params.taps != [1.0] {
        out = channel::filter(&out, &params.taps)?;
    }
    Ok(out)
}

/// Runs the network's estimator on one frame.
pub fn rtn_estimate(net: &Network, frame: &SignalFrame) -> Result<RtnParams> {
    let stage = net
        .rtn_stage()
        .ok_or_else(|| Error::Config("network has no rtn estimator".into()))?;
    ensure!(
        frame.len() == net.spec().arch.samples(),
        Dimension,
        "frame has {} samples, estimator expects {}",
        frame.len(),
        net.spec().arch.samples()
    );
    let mut tape = Tape::new();
    let x = tape.constant(frame.data().clone().reshape(vec![1, 2, frame.len()])?);
    let mut rng = crate::rng::seeded(0);
    let mut ctx = ForwardCtx {
        training: false,
        rng: &mut rng,
    };
    let est = stage.estimate_on_tape(&mut tape, net.params(), x, &mut ctx)?;
    Ok(stage.params_from_row(tape.value(est).values()))
}

/// Localization network plus the inverse transforms it drives.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RtnStage {
    pub(crate) config: RtnConfig,
    pub(crate) layers: Vec<Layer>,
}

impl RtnStage {
    /// `conv1d(filters, k) -> tanh -> flatten -> dense(hidden) -> tanh -> dense(heads)`
    pub(crate) fn new(config: &RtnConfig, samples: usize, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        let c = config;
        let kinds = [
            LayerKind::Conv1d {
                in_channels: 2,
                filters: c.filters,
                kernel_len: c.kernel_len,
            },
            LayerKind::Activation {
                function: Activation::Tanh,
            },
            LayerKind::Reshape {
                shape: vec![c.filters * samples],
            },
            LayerKind::Dense {
                inputs: c.filters * samples,
                outputs: c.hidden,
            },
            LayerKind::Activation {
                function: Activation::Tanh,
            },
            LayerKind::Dense {
                inputs: c.hidden,
                outputs: c.outputs(),
            },
        ];
        let layers = kinds
            .into_iter()
            .enumerate()
            .map(|(i, k)| Layer::new(format!("rtn.{i}"), k, store, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    pub(crate) fn estimate_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        crate::autodiff::forward_all(&self.layers, tape, store, x, ctx)
    }

    /// Head layout: phase, freq, time, then equalizer corrections around a
    /// unit impulse.
    pub(crate) fn params_from_row(&self, row: &[f64]) -> RtnParams {
        let c = &self.config;
        let mut idx = 0;
        let mut take = |on: bool| {
            if on {
                idx += 1;
                row[idx - 1]
            } else {
                0.0
            }
        };
        let phase = take(c.phase);
        let freq = take(c.freq);
        let time_shift = take(c.time);
        let taps = if c.eq_taps > 0 {
            let mut t = row[idx..idx + c.eq_taps].to_vec();
            t[0] += 1.0;
            t
        } else {
            vec![1.0]
        };
        RtnParams {
            phase,
            freq,
            time_shift,
            taps,
        }
    }

    /// Applies the inverse transforms driven by the estimator output `est`.
    pub(crate) fn transform_on_tape(&self, tape: &mut Tape, x: Var, est: Var) -> Result<Var> {
        let c = &self.config;
        let batch = tape.shape(x)[0];
        let mut idx = 0;
        let mut head = |tape: &mut Tape, on: bool| -> Result<Option<Var>> {
            if !on {
                return Ok(None);
            }
            idx += 1;
            let col = tape.columns(est, idx - 1, 1)?;
            Ok(Some(tape.reshape(col, vec![batch])?))
        };
        let phase = head(tape, c.phase)?;
        let freq = head(tape, c.freq)?;
        let time = head(tape, c.time)?;
        let taps = if c.eq_taps > 0 {
            let delta = tape.columns(est, idx, c.eq_taps)?;
            let mut impulse = vec![0.0; batch * c.eq_taps];
            impulse.iter_mut().step_by(c.eq_taps).for_each(|v| *v = 1.0);
            let impulse = tape.constant(Tensor::new(vec![batch, c.eq_taps], impulse)?);
            Some(tape.add(impulse, delta)?)
        } else {
            None
        };
        transform_on_tape(tape, x, phase, freq, time, taps)
    }
}

/// Records the inverse transforms; absent parameters are skipped (phase and
/// frequency default to zero when only one of them is given).
pub(crate) fn transform_on_tape(
    tape: &mut Tape,
    x: Var,
    phase: Option<Var>,
    freq: Option<Var>,
    time_shift: Option<Var>,
    taps: Option<Var>,
) -> Result<Var> {
    let batch = tape.shape(x)[0];
    let mut y = x;
    if phase.is_some() || freq.is_some() {
        let zeros = |tape: &mut Tape| tape.constant(Tensor::zeros(vec![batch]));
        let p = match phase {
            Some(p) => p,
            None => zeros(tape),
        };
        let f = match freq {
            Some(f) => f,
            None => zeros(tape),
        };
        y = tape.rotate(y, p, f, -1.0)?;
    }
    if let Some(t) = time_shift {
        let shift = tape.mask(t, vec![-1.0; batch])?;
        let rate = tape.constant(Tensor::filled(vec![batch], 1.0));
        y = tape.time_warp(y, shift, rate)?;
    }
    if let Some(h) = taps {
        y = tape.fir(y, h)?;
    }
    Ok(y)
}

/// Records the inverse transforms for known per-example parameters.
pub(crate) fn oracle_on_tape(tape: &mut Tape, x: Var, params: &[RtnParams]) -> Result<Var> {
    let batch = tape.shape(x)[0];
    ensure!(params.len() == batch, Dimension, "{} rtn parameter sets for batch {batch}", params.len());
    for p in params {
        p.validate()?;
    }
    let col = |tape: &mut Tape, f: &dyn Fn(&RtnParams) -> f64| {
        tape.constant(Tensor::new(vec![batch], params.iter().map(f).collect()).expect("batch values"))
    };
    let phase = col(tape, &|p| p.phase);
    let freq = col(tape, &|p| p.freq);
    let time = params
        .iter()
        .any(|p| p.time_shift != 0.0)
        .then(|| col(tape, &|p| p.time_shift));
    let t = params[0].taps.len();
    let needs_eq = params.iter().any(|p| !p.taps.is_empty() && p.taps != [1.0]);
    let taps = if needs_eq {
        ensure!(params.iter().all(|p| p.taps.len() == t), Dimension, "ragged equalizer taps");
        Some(tape.constant(Tensor::new(
            vec![batch, t],
            params.iter().flat_map(|p| p.taps.clone()).collect(),
        )?))
    } else {
        None
    };
    transform_on_tape(tape, x, Some(phase), Some(freq), time, taps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_frame(n: usize, seed: u64) -> SignalFrame {
        let mut r = rng::seeded(seed);
        SignalFrame::new(
            (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
            (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn max_diff(a: &SignalFrame, b: &SignalFrame) -> f64 {
        a.data()
            .values()
            .iter()
            .zip(b.data().values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_parameters_leave_frame_unchanged() {
        let x = random_frame(32, 1);
        assert_eq!(rtn_transform(&x, &RtnParams::identity()).unwrap(), x);
    }

    #[test]
    fn derotation_inverts_phase_and_frequency() {
        let x = random_frame(64, 2);
        let y = channel::rotate(&x, 1.234, 0.0).unwrap();
        let params = RtnParams {
            phase: 1.234,
            ..RtnParams::identity()
        };
        assert!(max_diff(&rtn_transform(&y, &params).unwrap(), &x) < 1e-9);
        let y = channel::rotate(&x, 4.1, 0.037).unwrap();
        let params = RtnParams {
            phase: 4.1,
            freq: 0.037,
            ..RtnParams::identity()
        };
        assert!(max_diff(&rtn_transform(&y, &params).unwrap(), &x) < 1e-9);
    }

    #[test]
    fn integer_delay_is_undone_away_from_edges() {
        let x = random_frame(32, 3);
        let y = channel::shift_time(&x, 3.0, 1.0).unwrap();
        let back = rtn_transform(
            &y,
            &RtnParams {
                time_shift: 3.0,
                ..RtnParams::identity()
            },
        )
        .unwrap();
        for k in 0..29 {
            assert!((back.i()[k] - x.i()[k]).abs() < 1e-12);
            assert!((back.q()[k] - x.q()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_tape_route_matches_frame_route() {
        let frames: Vec<SignalFrame> = (0..3).map(|s| random_frame(16, 10 + s)).collect();
        let params: Vec<RtnParams> = (0..3)
            .map(|k| RtnParams {
                phase: 0.7 * k as f64,
                freq: 0.01 * k as f64,
                time_shift: 0.5 * k as f64,
                taps: vec![1.0, 0.2 * k as f64],
            })
            .collect();
        let mut tape = Tape::new();
        let data: Vec<f64> = frames.iter().flat_map(|f| f.data().values().to_vec()).collect();
        let x = tape.constant(Tensor::new(vec![3, 2, 16], data).unwrap());
        let y = oracle_on_tape(&mut tape, x, &params).unwrap();
        for (b, (f, p)) in frames.iter().zip(&params).enumerate() {
            let expect = rtn_transform(f, p).unwrap();
            for (a, e) in tape.value(y).values()[b * 32..(b + 1) * 32].iter().zip(expect.data().values()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_parameters_rejected() {
        let x = random_frame(8, 4);
        let p = RtnParams {
            phase: f64::NAN,
            ..RtnParams::identity()
        };
        assert!(rtn_transform(&x, &p).is_err());
    }
}
