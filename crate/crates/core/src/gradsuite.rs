//! Finite-difference checks of every differentiable operation: each layer
//! kind, each loss, each channel transform under a fixed draw, and complete
//! encoder/channel/decoder graphs.

use std::f64::consts::PI;

use rand::Rng as _;
use rayon::prelude::*;

use crate::autodiff::{
    dropout_forward, grad_check_probes, Activation, ForwardCtx, GradCheckReport, LossFn, LossKind, ParamStore,
    Tape, Var,
};
use crate::channel::{channel_on_tape, draw_channel, ChannelConfig, ChannelDraw};
use crate::error::Result;
use crate::modem::{BitFrame, DecodeMode, ModemArch, Network, NetworkSpec, RtnConfig, RtnMode};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

/// Largest relative error a check may report and still pass.
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    /// Random parameter points per check.
    pub probes: usize,
    /// Finite-difference step.
    pub eps: f64,
    /// Elements sampled per parameter tensor and probe.
    pub max_per_param: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            probes: 10,
            eps: 1e-4,
            max_per_param: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < TOLERANCE
    }
}

type Check = fn(&SuiteConfig, &mut Rng) -> Result<GradCheckReport>;

const CHECKS: &[(&str, Check)] = &[
    ("layer/dense", dense),
    ("layer/conv1d_k1", |c, r| conv(c, r, 1)),
    ("layer/conv1d_k3", |c, r| conv(c, r, 3)),
    ("layer/conv1d_k8", |c, r| conv(c, r, 8)),
    ("layer/activation_linear", |c, r| activation(c, r, Activation::Linear)),
    ("layer/activation_relu", |c, r| activation(c, r, Activation::Relu)),
    ("layer/activation_tanh", |c, r| activation(c, r, Activation::Tanh)),
    ("layer/activation_hard_sigmoid", |c, r| activation(c, r, Activation::HardSigmoid)),
    ("layer/dropout", dropout),
    ("layer/reshape", reshape),
    ("layer/normalize_power", normalize_power),
    ("loss/mse", |c, r| loss(c, r, LossKind::new(LossFn::Mse))),
    ("loss/clmse", |c, r| loss(c, r, LossKind::new(LossFn::Clmse))),
    ("loss/clmee", |c, r| loss(c, r, LossKind::new(LossFn::Clmee))),
    ("loss/clmle", |c, r| loss(c, r, LossKind::new(LossFn::Clmle))),
    ("loss/clmee_inverted", |c, r| loss(c, r, inverted(LossFn::Clmee))),
    ("loss/clmle_inverted", |c, r| loss(c, r, inverted(LossFn::Clmle))),
    ("channel/rotate", |c, r| rotate(c, r, 1.0)),
    ("channel/rotate_inverse", |c, r| rotate(c, r, -1.0)),
    ("channel/time_warp", time_warp),
    ("channel/fir", fir),
    ("channel/add", add),
    ("channel/columns", columns),
    ("channel/full_draw", full_channel),
    ("graph/dnn", graph_dnn),
    ("graph/cnn", graph_cnn),
    ("graph/cnn_hard_clmle", graph_cnn_hard),
    ("graph/cnn_rtn", graph_rtn),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check in parallel; entries come back in registry order.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<SuiteEntry>> {
    CHECKS
        .par_iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let report = check(cfg, &mut rng::stream(cfg.seed, i as u64))?;
            Ok(SuiteEntry { name, report })
        })
        .collect()
}

fn inverted(function: LossFn) -> LossKind {
    LossKind {
        inverted: true,
        ..LossKind::new(function)
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(lo..hi)).collect()).expect("shape matches")
}

fn store_of(entries: Vec<(&str, Tensor)>) -> Result<ParamStore> {
    let mut s = ParamStore::new();
    for (name, t) in entries {
        s.add(name, t)?;
    }
    Ok(s)
}

fn p(tape: &mut Tape, store: &ParamStore, name: &str) -> Var {
    tape.param(store, store.find(name).expect("parameter registered by init"))
}

fn random_weights(n: usize, r: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// `sum(w * y)` with fixed weights, so every output element carries an O(1)
/// share of the gradient.
fn weighted_sum(tape: &mut Tape, y: Var, w: &[f64]) -> Result<Var> {
    let n = tape.value(y).len();
    let flat = tape.reshape(y, vec![1, n])?;
    let wv = tape.constant(Tensor::new(vec![n, 1], w.to_vec())?);
    let b = tape.constant(Tensor::zeros(vec![1]));
    tape.dense(flat, wv, b)
}

fn run<I, F>(cfg: &SuiteConfig, r: &mut Rng, init: I, objective: F) -> Result<GradCheckReport>
where
    I: FnMut(&mut Rng) -> Result<ParamStore>,
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    grad_check_probes(cfg.probes, cfg.eps, cfg.max_per_param, r, init, objective)
}

fn dense(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let w = random_weights(3 * 4, r);
    run(
        cfg,
        r,
        |r| {
            store_of(vec![
                ("x", uniform(&[3, 5], -1.0, 1.0, r)),
                ("w", uniform(&[5, 4], -1.0, 1.0, r)),
                ("b", uniform(&[4], -1.0, 1.0, r)),
            ])
        },
        |t, s| {
            let (x, wv, b) = (p(t, s, "x"), p(t, s, "w"), p(t, s, "b"));
            let y = t.dense(x, wv, b)?;
            weighted_sum(t, y, &w)
        },
    )
}

fn conv(cfg: &SuiteConfig, r: &mut Rng, klen: usize) -> Result<GradCheckReport> {
    let w = random_weights(2 * 4 * 10, r);
    run(
        cfg,
        r,
        |r| {
            store_of(vec![
                ("x", uniform(&[2, 3, 10], -1.0, 1.0, r)),
                ("k", uniform(&[4, 3, klen], -1.0, 1.0, r)),
                ("b", uniform(&[4], -1.0, 1.0, r)),
            ])
        },
        |t, s| {
            let (x, k, b) = (p(t, s, "x"), p(t, s, "k"), p(t, s, "b"));
            let y = t.conv1d(x, k, b)?;
            weighted_sum(t, y, &w)
        },
    )
}

fn activation(cfg: &SuiteConfig, r: &mut Rng, kind: Activation) -> Result<GradCheckReport> {
    let w = random_weights(12, r);
    run(
        cfg,
        r,
        |r| store_of(vec![("x", uniform(&[2, 6], -4.0, 4.0, r))]),
        |t, s| {
            let x = p(t, s, "x");
            let y = t.activation(x, kind);
            weighted_sum(t, y, &w)
        },
    )
}

fn dropout(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let w = random_weights(16, r);
    run(
        cfg,
        r,
        |r| store_of(vec![("x", uniform(&[2, 8], -1.0, 1.0, r))]),
        |t, s| {
            let x = p(t, s, "x");
            let y = dropout_forward(t, x, 0.3, true, &mut rng::seeded(7))?;
            weighted_sum(t, y, &w)
        },
    )
}

fn reshape(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let w = random_weights(24, r);
    run(
        cfg,
        r,
        |r| store_of(vec![("x", uniform(&[2, 3, 4], -1.0, 1.0, r))]),
        |t, s| {
            let x = p(t, s, "x");
            let y = t.reshape(x, vec![2, 12])?;
            let y = t.activation(y, Activation::Tanh);
            weighted_sum(t, y, &w)
        },
    )
}

fn normalize_power(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let w = random_weights(3 * 2 * 6, r);
    run(
        cfg,
        r,
        |r| store_of(vec![("x", uniform(&[3, 2, 6], -1.0, 1.0, r))]),
        |t, s| {
            let x = p(t, s, "x");
            let y = t.normalize_power(x)?;
            weighted_sum(t, y, &w)
        },
    )
}

fn loss(cfg: &SuiteConfig, r: &mut Rng, kind: LossKind) -> Result<GradCheckReport> {
    let targets: Vec<f64> = (0..24).map(|_| f64::from(u8::from(r.random::<bool>()))).collect();
    run(
        cfg,
        r,
        |r| store_of(vec![("p", uniform(&[4, 6], -0.5, 1.5, r))]),
        |t, s| {
            let pv = p(t, s, "p");
            t.loss(pv, &targets, kind)
        },
    )
}

fn rotate(cfg: &SuiteConfig, r: &mut Rng, sign: f64) -> Result<GradCheckReport> {
    let w = random_weights(2 * 2 * 8, r);
    run(
        cfg,
        r,
        |r| {
            store_of(vec![
                ("x", uniform(&[2, 2, 8], -1.0, 1.0, r)),
                ("phase", uniform(&[2], -PI, PI, r)),
                ("freq", uniform(&[2], -0.2, 0.2, r)),
            ])
        },
        |t, s| {
            let (x, ph, fr) = (p(t, s, "x"), p(t, s, "phase"), p(t, s, "freq"));
            let y = t.rotate(x, ph, fr, sign)?;
            weighted_sum(t, y, &w)
        },
    )
}

fn time_warp(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let w = random_weights(2 * 2 * 8, r);
    run(
        cfg,
        r,
        |r| {
            store_of(vec![
                ("x", uniform(&[2, 2, 8], -1.0, 1.0, r)),
                ("shift", uniform(&[2], -2.0, 2.0, r)),
                ("rate", uniform(&[2], 0.8, 1.25, r)),
            ])
        },
        |t, s| {
            let (x, sh, ra) = (p(t, s, "x"), p(t, s, "shift"), p(t, s, "rate"));
            let y = t.time_warp(x, sh, ra)?;
            weighted_sum(t, y, &w)
        },
    )
}

fn fir(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let w = random_weights(2 * 2 * 8, r);
    run(
        cfg,
        r,
        |r| {
            store_of(vec![
                ("x", uniform(&[2, 2, 8], -1.0, 1.0, r)),
                ("taps", uniform(&[2, 3], -1.0, 1.0, r)),
            ])
        },
        |t, s| {
            let (x, h) = (p(t, s, "x"), p(t, s, "taps"));
            let y = t.fir(x, h)?;
            weighted_sum(t, y, &w)
        },
    )
}

fn add(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let w = random_weights(10, r);
    run(
        cfg,
        r,
        |r| {
            store_of(vec![
                ("a", uniform(&[2, 5], -1.0, 1.0, r)),
                ("b", uniform(&[2, 5], -1.0, 1.0, r)),
            ])
        },
        |t, s| {
            let (a, b) = (p(t, s, "a"), p(t, s, "b"));
            let y = t.add(a, b)?;
            let y = t.activation(y, Activation::Tanh);
            weighted_sum(t, y, &w)
        },
    )
}

fn columns(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let w = random_weights(6, r);
    run(
        cfg,
        r,
        |r| store_of(vec![("x", uniform(&[2, 7], -1.0, 1.0, r))]),
        |t, s| {
            let x = p(t, s, "x");
            let y = t.columns(x, 2, 3)?;
            let y = t.activation(y, Activation::Tanh);
            weighted_sum(t, y, &w)
        },
    )
}

fn impaired_channel() -> ChannelConfig {
    ChannelConfig {
        time_offset: true,
        sigma_t: 1.0,
        sigma_t_rate: 0.02,
        phase_offset: true,
        sigma_f: 0.02,
        delay_spread: true,
        n_taps: 3,
        ..ChannelConfig::awgn(5.0)
    }
}

fn draws(cfg: &ChannelConfig, batch: usize, n: usize, r: &mut Rng) -> Result<Vec<ChannelDraw>> {
    (0..batch).map(|_| draw_channel(cfg, n, r)).collect()
}

fn full_channel(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let ch = impaired_channel();
    let d = draws(&ch, 2, 10, r)?;
    let w = random_weights(2 * 2 * 10, r);
    run(
        cfg,
        r,
        |r| store_of(vec![("x", uniform(&[2, 2, 10], -1.0, 1.0, r))]),
        |t, s| {
            let x = p(t, s, "x");
            let y = channel_on_tape(t, x, &ch, &d)?;
            weighted_sum(t, y, &w)
        },
    )
}

/// Checks a whole network: encoder, channel under fixed draws, optional
/// synchronization, decoder and loss, with a fixed dropout mask.
fn graph(cfg: &SuiteConfig, r: &mut Rng, spec: NetworkSpec, mode: RtnMode) -> Result<GradCheckReport> {
    let template = Network::build(spec, 0)?;
    let n_bits = template.spec().arch.n_bits;
    let samples = template.spec().arch.samples();
    let channel = template.spec().channel.clone();
    let bits: Vec<BitFrame> = (0..3).map(|_| BitFrame::random(n_bits, r)).collect();
    let d = draws(&channel, bits.len(), samples, r)?;
    let spec = template.spec().clone();
    run(
        cfg,
        r,
        |r| Ok(Network::build(spec.clone(), r.random())?.params().clone()),
        |t, s| {
            let mut net = template.clone();
            *net.params_mut() = s.clone();
            let mut mask_rng = rng::seeded(11);
            let mut ctx = ForwardCtx {
                training: true,
                rng: &mut mask_rng,
            };
            let soft = net.forward(t, &bits, &channel, &d, mode, &mut ctx)?;
            net.loss_on_tape(t, soft, &bits)
        },
    )
}

fn graph_dnn(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let spec = NetworkSpec {
        arch: ModemArch {
            hidden: vec![12],
            dropout: 0.2,
            ..ModemArch::dnn(6)
        },
        channel: impaired_channel(),
        loss: LossKind::mse(),
        decode_mode: DecodeMode::Soft,
        rtn: None,
    };
    graph(cfg, r, spec, RtnMode::Off)
}

fn small_cnn() -> ModemArch {
    ModemArch {
        filters: 4,
        kernel_len: 3,
        dropout: 0.2,
        ..ModemArch::cnn(8)
    }
}

fn graph_cnn(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let spec = NetworkSpec {
        arch: small_cnn(),
        channel: impaired_channel(),
        loss: LossKind::new(LossFn::Clmse),
        decode_mode: DecodeMode::Soft,
        rtn: None,
    };
    graph(cfg, r, spec, RtnMode::Off)
}

fn graph_cnn_hard(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let spec = NetworkSpec {
        arch: small_cnn(),
        channel: ChannelConfig::awgn(3.0),
        loss: LossKind::new(LossFn::Clmle),
        decode_mode: DecodeMode::Hard,
        rtn: None,
    };
    graph(cfg, r, spec, RtnMode::Off)
}

fn graph_rtn(cfg: &SuiteConfig, r: &mut Rng) -> Result<GradCheckReport> {
    let channel = impaired_channel();
    let spec = NetworkSpec {
        arch: small_cnn(),
        rtn: Some(RtnConfig {
            filters: 3,
            kernel_len: 3,
            hidden: 6,
            ..RtnConfig::for_channel(&channel)
        }),
        channel,
        loss: LossKind::mse(),
        decode_mode: DecodeMode::Soft,
    };
    graph(cfg, r, spec, RtnMode::Learned)
}
