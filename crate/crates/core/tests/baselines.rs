#![allow(clippy::excessive_precision)]

use chanae_core::baselines::*;

mod support;

use support::{erfc_grid_x, ERFC_GRID};

#[test]
fn erfc_matches_high_precision_grid() {
    for (k, &want) in ERFC_GRID.iter().enumerate() {
        let x = erfc_grid_x(k);
        let got = erfc(x);
        assert!((got - want).abs() < 1e-12, "erfc({x}) = {got}, want {want}");
        assert!((got - want).abs() <= 1e-10 * want, "relative error at {x}");
        assert!((erfc(-x) - (2.0 - want)).abs() < 1e-12);
    }
}

#[test]
fn analytic_curves_match_frozen_values() {
    let qpsk = [
        0.078_649_603_525_142_565,
        0.037_506_128_358_925_991,
        0.012_500_818_040_737_56,
        0.002_388_290_780_932_806_3,
        0.000_190_907_774_075_993_16,
    ];
    let qam16 = [
        0.139_160_013_571_011_59,
        0.097_559_352_376_708_89,
        0.058_618_457_419_250_874,
        0.027_871_306_319_660_707,
        0.009_247_213_737_517_434_8,
    ];
    for (i, e) in [0.0, 2.0, 4.0, 6.0, 8.0].into_iter().enumerate() {
        assert!((qpsk_ber(e) - qpsk[i]).abs() < 1e-10 * qpsk[i], "qpsk at {e}: {}", qpsk_ber(e) - qpsk[i]);
        assert!((qam16_ber(e) - qam16[i]).abs() < 1e-10 * qam16[i], "qam16 at {e}: {}", qam16_ber(e) - qam16[i]);
    }
    let curve = qpsk_curve(&[0.0, 4.0]);
    assert_eq!(curve[1].pb, qpsk_ber(4.0));
    assert!(qam16_curve(&[-50.0, 50.0]).iter().all(|p| (0.0..=0.5).contains(&p.pb)));
}

#[test]
fn monte_carlo_agrees_with_analytic_qpsk() {
    for (i, e) in [0.0, 2.0, 4.0, 6.0, 8.0].into_iter().enumerate() {
        let m = qpsk_monte_carlo_seeded(e, 1_000_000, 100 + i as u64).unwrap();
        let p = qpsk_ber(e);
        let s = binomial_sigma(p, m.bits);
        assert!((m.ber() - p).abs() <= 3.0 * s, "{e} dB: measured {} vs {p}", m.ber());
    }
}
