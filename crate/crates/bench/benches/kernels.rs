use std::hint::black_box;

use chanae_bench::{frame, input, layer};
use chanae_core::autodiff::{ForwardCtx, LayerKind, OptimizerConfig, OptimizerState};
use chanae_core::baselines::erfc;
use chanae_core::channel::{apply_channel, draw_channel};
use chanae_core::modem::{build_autoencoder, RtnMode};
use chanae_core::{rng, BitFrame, ChannelConfig, DecodeMode, LossKind, ModemArch, Tape};
use criterion::{criterion_group, criterion_main, Criterion};

fn layers(c: &mut Criterion) {
    let mut g = c.benchmark_group("layer_forward_backward");
    let cases = [
        ("dense_128x512", LayerKind::Dense { inputs: 128, outputs: 512 }, vec![64, 128]),
        (
            "conv1d_k8",
            LayerKind::Conv1d {
                in_channels: 16,
                filters: 16,
                kernel_len: 8,
            },
            vec![64, 16, 128],
        ),
        (
            "conv1d_k1",
            LayerKind::Conv1d {
                in_channels: 16,
                filters: 16,
                kernel_len: 1,
            },
            vec![64, 16, 128],
        ),
    ];
    for (name, kind, shape) in cases {
        let (l, mut store) = layer(kind);
        let x = input(shape);
        let mut r = rng::seeded(0);
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let xv = tape.constant(x.clone());
                let mut ctx = ForwardCtx {
                    training: true,
                    rng: &mut r,
                };
                let y = l.forward(&mut tape, &store, xv, &mut ctx).unwrap();
                let n = tape.value(y).len();
                let flat = tape.reshape(y, vec![n]).unwrap();
                let s = tape.loss(flat, &vec![0.0; n], LossKind::mse()).unwrap();
                tape.backward(s, &mut store).unwrap();
            })
        });
    }
    g.finish();
}

fn channel(c: &mut Criterion) {
    let x = frame(128);
    let full = ChannelConfig {
        time_offset: true,
        sigma_t: 1.0,
        sigma_t_rate: 0.01,
        phase_offset: true,
        sigma_f: 0.01,
        delay_spread: true,
        n_taps: 4,
        ..ChannelConfig::awgn(5.0)
    };
    let mut g = c.benchmark_group("channel_128_samples");
    for (name, cfg) in [("awgn", ChannelConfig::awgn(5.0)), ("all_impairments", full)] {
        let mut r = rng::seeded(1);
        g.bench_function(name, |b| b.iter(|| apply_channel(black_box(&x), &cfg, &mut r).unwrap()));
    }
    g.finish();
}

fn baselines(c: &mut Criterion) {
    c.bench_function("erfc_grid_0_6", |b| {
        b.iter(|| (0..600).map(|k| erfc(black_box(k as f64 * 0.01))).sum::<f64>())
    });
}

fn train_step(c: &mut Criterion) {
    let channel = ChannelConfig::awgn(5.0);
    let mut net = build_autoencoder(ModemArch::cnn(128), channel.clone(), LossKind::mse(), DecodeMode::Soft, 0).unwrap();
    let mut opt = OptimizerState::new(OptimizerConfig::adam(1e-3), net.params()).unwrap();
    let mut r = rng::seeded(2);
    let bits: Vec<BitFrame> = (0..64).map(|_| BitFrame::random(128, &mut r)).collect();
    let draws: Vec<_> = (0..64).map(|_| draw_channel(&channel, 128, &mut r).unwrap()).collect();
    let mut g = c.benchmark_group("cnn128");
    g.sample_size(10);
    g.bench_function("train_step_batch64", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let mut ctx = ForwardCtx {
                training: true,
                rng: &mut r,
            };
            let soft = net.forward(&mut tape, &bits, &channel, &draws, RtnMode::Off, &mut ctx).unwrap();
            let loss = net.loss_on_tape(&mut tape, soft, &bits).unwrap();
            tape.backward(loss, net.params_mut()).unwrap();
            opt.step(net.params_mut()).unwrap();
        })
    });
    g.bench_function("evaluate_batch64", |b| {
        b.iter(|| net.evaluate(&bits, &channel, &draws, RtnMode::Off).unwrap())
    });
    g.finish();
}

criterion_group!(benches, layers, channel, baselines, train_step);
criterion_main!(benches);
