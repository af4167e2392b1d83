use std::f64::consts::{FRAC_PI_2, TAU};

use super::*;
use crate::rng;

fn frame(i: &[f64], q: &[f64]) -> SignalFrame {
    SignalFrame::new(i.to_vec(), q.to_vec()).unwrap()
}

fn max_diff(a: &SignalFrame, b: &SignalFrame) -> f64 {
    a.data()
        .values()
        .iter()
        .zip(b.data().values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn random_frame(n: usize, seed: u64) -> SignalFrame {
    let mut r = rng::seeded(seed);
    let i = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let q = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    SignalFrame::new(i, q).unwrap()
}

#[test]
fn frame_shape_invariants() {
    assert!(SignalFrame::new(vec![1.0], vec![]).is_err());
    assert!(SignalFrame::new(vec![], vec![]).is_err());
    assert!(SignalFrame::new(vec![f64::NAN], vec![0.0]).is_err());
    assert!(SignalFrame::from_tensor(Tensor::zeros(vec![3, 4])).is_err());
}

#[test]
fn normalize_power_examples() {
    let y = normalize_power(&frame(&[1.0, 1.0], &[1.0, 1.0])).unwrap();
    for &v in y.data().values() {
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }
    let y = normalize_power(&frame(&[2.0], &[0.0])).unwrap();
    assert_eq!(y, frame(&[1.0], &[0.0]));
    for seed in 0..20 {
        let y = normalize_power(&random_frame(37, seed)).unwrap();
        assert!((y.power() - 1.0).abs() < 1e-12);
    }
    assert!(matches!(
        normalize_power(&SignalFrame::zeros(4)),
        Err(crate::Error::DegenerateInput(_))
    ));
}

#[test]
fn noise_standard_deviation_conventions() {
    let cfg = ChannelConfig::awgn(0.0);
    assert!((cfg.noise_std() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert!((NoiseConvention::LiteralStd.component_std(0.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert!((NoiseConvention::LiteralStd.component_std(10.0) - 0.1 / 2f64.sqrt()).abs() < 1e-15);
    assert!((NoiseConvention::UnitPower.component_std(10.0) - 0.05f64.sqrt()).abs() < 1e-15);
}

#[test]
fn awgn_infinite_snr_is_identity() {
    let x = random_frame(16, 1);
    let (y, draw) = awgn(&x, f64::INFINITY, &mut rng::seeded(0)).unwrap();
    assert_eq!(y, x);
    assert!(draw.noise.values().iter().all(|&v| v == 0.0));
}

#[test]
fn awgn_is_additive() {
    let mut r = rng::seeded(5);
    let x = random_frame(32, 2);
    let (y, draw) = awgn(&x, 3.0, &mut r).unwrap();
    let other = random_frame(32, 3);
    let y2 = add_noise(&other, &draw.noise).unwrap();
    for k in 0..64 {
        let a = y.data().values()[k] - x.data().values()[k];
        let b = y2.data().values()[k] - other.data().values()[k];
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn time_offset_examples() {
    let x = frame(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]);
    let (y, d) = time_offset(&x, 0.0, 0.0, &mut rng::seeded(0)).unwrap();
    assert_eq!((d.theta_t, d.theta_t_rate), (0.0, 1.0));
    assert_eq!(y, x);
    assert_eq!(shift_time(&x, 2.0, 1.0).unwrap().i(), &[0.0, 0.0, 1.0, 2.0]);
    let ones = frame(&[1.0; 8], &[1.0; 8]);
    let y = shift_time(&ones, 0.5, 1.0).unwrap();
    assert!(y.i()[1..].iter().all(|&v| (v - 1.0).abs() < 1e-15));
    assert!(shift_time(&x, 0.0, 0.0).is_err());
}

#[test]
fn dilation_redraws_below_guard() {
    let mut r = rng::seeded(9);
    for _ in 0..2000 {
        let (_, rate) = draw_timing(1.0, 2.0, &mut r);
        assert!(rate > MIN_DILATION);
    }
}

#[test]
fn rotation_examples() {
    let x = frame(&[0.3, -1.2, 0.5], &[0.9, 0.1, -0.4]);
    assert_eq!(rotate(&x, 0.0, 0.0).unwrap(), x);
    let y = rotate(&frame(&[1.0], &[0.0]), FRAC_PI_2, 0.0).unwrap();
    assert!(y.i()[0].abs() < 1e-15 && (y.q()[0] - 1.0).abs() < 1e-15);
    let back = rotate(&rotate(&x, 0.8, 0.05).unwrap(), -0.8, -0.05).unwrap();
    assert!(max_diff(&back, &x) < 1e-12);
}

#[test]
fn rotation_preserves_magnitude() {
    let x = random_frame(64, 4);
    let (y, _) = phase_freq_offset(&x, TAU, 0.1, &mut rng::seeded(1)).unwrap();
    for k in 0..64 {
        let a = x.i()[k].powi(2) + x.q()[k].powi(2);
        let b = y.i()[k].powi(2) + y.q()[k].powi(2);
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn delay_spread_examples() {
    let x = frame(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
    assert_eq!(filter(&x, &[1.0]).unwrap(), x);
    let y = filter(&x, &[0.0, 1.0]).unwrap();
    assert_eq!(y.i(), &[0.0, 1.0, 2.0]);
    assert_eq!(y.q(), &[0.0, 4.0, 5.0]);
    let taps = [0.3, -0.7, 0.2];
    let a = filter(&x.map(|v| 2.5 * v).unwrap(), &taps).unwrap();
    let b = filter(&x, &taps).unwrap().map(|v| 2.5 * v).unwrap();
    assert!(max_diff(&a, &b) < 1e-12);
    assert!(matches!(
        delay_spread(&x, 4, &mut rng::seeded(0)),
        Err(crate::Error::Config(_))
    ));
}

#[test]
fn disabled_channel_only_normalizes() {
    let x = random_frame(20, 6);
    let (y, _) = apply_channel(&x, &ChannelConfig::clean(), &mut rng::seeded(0)).unwrap();
    assert_eq!(y, normalize_power(&x).unwrap());
}

#[test]
fn replay_is_bit_identical() {
    let cfg = ChannelConfig {
        time_offset: true,
        sigma_t: 1.5,
        sigma_t_rate: 0.01,
        phase_offset: true,
        sigma_f: 0.01,
        delay_spread: true,
        n_taps: 3,
        ..ChannelConfig::awgn(4.0)
    };
    let x = random_frame(48, 7);
    let (y, draw) = apply_channel(&x, &cfg, &mut rng::seeded(3)).unwrap();
    assert_eq!(replay_channel(&x, &cfg, &draw).unwrap(), y);
}

#[test]
fn zero_phase_range_consumes_no_randomness() {
    let awgn_only = ChannelConfig::awgn(5.0);
    let zero_phase = ChannelConfig {
        phase_offset: true,
        phase_max: 0.0,
        ..awgn_only.clone()
    };
    let x = random_frame(16, 8);
    let a = apply_channel(&x, &awgn_only, &mut rng::seeded(4)).unwrap();
    let b = apply_channel(&x, &zero_phase, &mut rng::seeded(4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_validation() {
    let mut c = ChannelConfig::awgn(0.0);
    c.n_taps = 0;
    assert!(c.validate().is_err());
    let mut c = ChannelConfig::awgn(0.0);
    c.sigma_f = -1.0;
    assert!(c.validate().is_err());
    let mut c = ChannelConfig::awgn(0.0);
    c.phase_max = 7.0;
    assert!(c.validate().is_err());
    let json = r#"{"snr_db": 5.0, "bogus": 1}"#;
    assert!(serde_json::from_str::<ChannelConfig>(json).is_err());
}

#[test]
fn tape_route_matches_frame_route() {
    let cfg = ChannelConfig {
        time_offset: true,
        sigma_t: 2.0,
        sigma_t_rate: 0.02,
        phase_offset: true,
        sigma_f: 0.02,
        delay_spread: true,
        n_taps: 4,
        ..ChannelConfig::awgn(2.0)
    };
    let frames: Vec<SignalFrame> = (0..3).map(|s| normalize_power(&random_frame(24, s)).unwrap()).collect();
    let mut r = rng::seeded(10);
    let draws: Vec<ChannelDraw> = frames.iter().map(|f| draw_channel(&cfg, f.len(), &mut r).unwrap()).collect();
    let mut tape = Tape::new();
    let batch: Vec<f64> = frames.iter().flat_map(|f| f.data().values().to_vec()).collect();
    let x = tape.constant(Tensor::new(vec![3, 2, 24], batch).unwrap());
    let y = channel_on_tape(&mut tape, x, &cfg, &draws).unwrap();
    let out = tape.value(y).values();
    for (b, (f, d)) in frames.iter().zip(&draws).enumerate() {
        let expect = replay_channel(f, &cfg, d).unwrap();
        for (a, e) in out[b * 48..(b + 1) * 48].iter().zip(expect.data().values()) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn infinite_snr_survives_json() {
    let cfg = ChannelConfig::awgn(f64::INFINITY);
    let text = serde_json::to_string(&cfg).unwrap();
    assert!(text.contains(r#""snr_db":"inf""#), "{text}");
    assert_eq!(serde_json::from_str::<ChannelConfig>(&text).unwrap(), cfg);
    let back: ChannelConfig = serde_json::from_str(r#"{"snr_db": "-inf"}"#).unwrap();
    assert_eq!(back.snr_db, f64::NEG_INFINITY);
    assert!(serde_json::from_str::<ChannelConfig>(r#"{"snr_db": "loud"}"#).is_err());
    let back: ChannelConfig = serde_json::from_str(r#"{"snr_db": 2.5}"#).unwrap();
    assert_eq!(back.snr_db, 2.5);
}
