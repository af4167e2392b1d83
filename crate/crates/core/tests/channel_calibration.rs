use std::f64::consts::TAU;

use chanae_core::channel::*;
use chanae_core::rng;
use chanae_core::Tensor;
use proptest::prelude::*;
use rand::Rng as _;

mod support;

use support::measured_noise_db;

fn random_frame(n: usize, r: &mut rng::Rng) -> SignalFrame {
    let i = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let q = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    SignalFrame::new(i, q).unwrap()
}

#[test]
fn measured_noise_power_matches_snr() {
    for snr in [-5.0, 0.0, 5.0, 10.0] {
        let measured = measured_noise_db(snr, 1_000_000, snr.to_bits());
        assert!((measured + snr).abs() < 0.2, "snr {snr}: noise power {measured} dB");
    }
}

#[test]
fn literal_convention_is_selectable() {
    let cfg = ChannelConfig {
        noise_convention: NoiseConvention::LiteralStd,
        ..ChannelConfig::awgn(10.0)
    };
    assert!((cfg.noise_std() - 0.1 / 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn rotation_preserves_magnitude_and_inverts() {
    let mut r = rng::seeded(1);
    for _ in 0..100 {
        let x = random_frame(128, &mut r);
        let phase = r.random_range(0.0..TAU);
        let freq = r.random_range(-0.1..0.1);
        let y = rotate(&x, phase, freq).unwrap();
        for k in 0..128 {
            let a = x.i()[k].hypot(x.q()[k]);
            let b = y.i()[k].hypot(y.q()[k]);
            assert!((a - b).abs() < 1e-9);
        }
        let back = rotate(&y, -phase, -freq).unwrap();
        for (a, b) in back.data().values().iter().zip(x.data().values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn unit_impulse_delay_spread_is_exact_identity() {
    let mut r = rng::seeded(2);
    for _ in 0..20 {
        let x = random_frame(64, &mut r);
        assert_eq!(filter(&x, &[1.0]).unwrap(), x);
        assert_eq!(filter(&x, &[1.0, 0.0, 0.0]).unwrap(), x);
    }
}

#[test]
fn draws_replay_exactly() {
    let cfg = ChannelConfig {
        time_offset: true,
        sigma_t: 2.0,
        sigma_t_rate: 0.05,
        phase_offset: true,
        sigma_f: 0.01,
        delay_spread: true,
        n_taps: 4,
        ..ChannelConfig::awgn(0.0)
    };
    let mut r = rng::seeded(3);
    let x = random_frame(100, &mut r);
    let (y, d) = apply_channel(&x, &cfg, &mut r).unwrap();
    assert_eq!(replay_channel(&x, &cfg, &d).unwrap(), y);
}

fn frame_strategy(n: usize) -> impl Strategy<Value = SignalFrame> {
    proptest::collection::vec(-3.0f64..3.0, 2 * n).prop_map(move |v| {
        let (i, q) = v.split_at(n);
        SignalFrame::new(i.to_vec(), q.to_vec()).unwrap()
    })
}

fn scale(x: &SignalFrame, a: f64) -> SignalFrame {
    let v = x.data().values().iter().map(|v| v * a).collect();
    SignalFrame::from_tensor(Tensor::new(vec![2, x.len()], v).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn impairments_are_homogeneous(x in frame_strategy(24), a in -4.0f64..4.0,
                                   shift in -3.0f64..3.0, rate in 0.5f64..1.5,
                                   phase in 0.0..TAU, freq in -0.2f64..0.2,
                                   taps in proptest::collection::vec(-1.0f64..1.0, 1..5)) {
        let ops: [&dyn Fn(&SignalFrame) -> SignalFrame; 3] = [
            &|f| shift_time(f, shift, rate).unwrap(),
            &|f| rotate(f, phase, freq).unwrap(),
            &|f| filter(f, &taps).unwrap(),
        ];
        for op in ops {
            let lhs = op(&scale(&x, a));
            let rhs = scale(&op(&x), a);
            for (p, q) in lhs.data().values().iter().zip(rhs.data().values()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn awgn_difference_is_independent_of_input(x in frame_strategy(16), z in frame_strategy(16), seed in any::<u64>()) {
        let (yx, _) = awgn(&x, 3.0, &mut rng::seeded(seed)).unwrap();
        let (yz, _) = awgn(&z, 3.0, &mut rng::seeded(seed)).unwrap();
        for k in 0..32 {
            let dx = yx.data().values()[k] - x.data().values()[k];
            let dz = yz.data().values()[k] - z.data().values()[k];
            prop_assert!((dx - dz).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_gives_unit_power(x in frame_strategy(20)) {
        prop_assume!(x.power() > 1e-6);
        let y = normalize_power(&x).unwrap();
        prop_assert!((y.power() - 1.0).abs() < 1e-12);
        let z = normalize_power(&y).unwrap();
        for (p, q) in y.data().values().iter().zip(z.data().values()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}
