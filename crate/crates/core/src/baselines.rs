//! Analytic and Monte-Carlo bit error rates of classical QPSK and QAM16.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::{self, Rng};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Complementary error function.
///
/// Below |x| = 3 the positive-term series
/// `erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n (2x^2)^n x / (1*3*...*(2n+1))`
/// is summed to convergence; beyond it the Laplace continued fraction is
/// evaluated with the modified Lentz method.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < 3.0 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

pub fn erf(x: f64) -> f64 {
    1.0 - erfc(x)
}

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// `erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `P_b = 1/2 erfc(sqrt(Eb/N0))`
pub fn qpsk_ber(ebn0_db: f64) -> f64 {
    0.5 * erfc(db_to_linear(ebn0_db).sqrt())
}

/// `P_b = 3/8 erfc(sqrt(4 Eb / (10 N0)))`
pub fn qam16_ber(ebn0_db: f64) -> f64 {
    0.375 * erfc((0.4 * db_to_linear(ebn0_db)).sqrt())
}

/// Per-sample SNR of a scheme carrying `bits_per_sample` bits per complex sample.
pub fn ebn0_to_snr_db(ebn0_db: f64, bits_per_sample: f64) -> f64 {
    ebn0_db + 10.0 * bits_per_sample.log10()
}

pub fn snr_to_ebn0_db(snr_db: f64, bits_per_sample: f64) -> f64 {
    snr_db - 10.0 * bits_per_sample.log10()
}

/// Standard deviation of a measured error rate `p` over `n` trials.
pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselinePoint {
    pub ebn0_db: f64,
    pub pb: f64,
}

pub fn qpsk_curve(ebn0_db: &[f64]) -> Vec<BaselinePoint> {
    ebn0_db
        .iter()
        .map(|&e| BaselinePoint {
            ebn0_db: e,
            pb: qpsk_ber(e),
        })
        .collect()
}

pub fn qam16_curve(ebn0_db: &[f64]) -> Vec<BaselinePoint> {
    ebn0_db
        .iter()
        .map(|&e| BaselinePoint {
            ebn0_db: e,
            pb: qam16_ber(e),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorCount {
    pub bits: u64,
    pub errors: u64,
}

impl ErrorCount {
    pub fn ber(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }
}

/// Gray-mapped QPSK over AWGN with unit symbol energy (`Eb = 1/2`).
pub fn qpsk_monte_carlo(ebn0_db: f64, n_bits: u64, rng: &mut Rng) -> Result<ErrorCount> {
    check_mc_bits(n_bits)?;
    Ok(qpsk_errors(ebn0_db, n_bits, rng))
}

/// Same as [`qpsk_monte_carlo`], split over independent streams of `seed`
/// and evaluated in parallel. The result depends only on the arguments.
pub fn qpsk_monte_carlo_seeded(ebn0_db: f64, n_bits: u64, seed: u64) -> Result<ErrorCount> {
    check_mc_bits(n_bits)?;
    const CHUNK: u64 = 1 << 16;
    let chunks = n_bits.div_ceil(CHUNK);
    let errors = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let bits = CHUNK.min(n_bits - c * CHUNK);
            qpsk_errors(ebn0_db, bits, &mut rng::stream(seed, c)).errors
        })
        .sum();
    Ok(ErrorCount { bits: n_bits, errors })
}

fn check_mc_bits(n_bits: u64) -> Result<()> {
    ensure!(n_bits.is_multiple_of(2), Input, "QPSK needs an even number of bits, got {n_bits}");
    ensure!(n_bits >= 10_000, Input, "at least 10^4 bits required, got {n_bits}");
    Ok(())
}

fn qpsk_errors(ebn0_db: f64, n_bits: u64, rng: &mut Rng) -> ErrorCount {
    let eb = 0.5;
    let n0 = eb / db_to_linear(ebn0_db);
    let std = (n0 / 2.0).sqrt();
    let mut errors = 0;
    let level = |bit: bool| if bit { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    for _ in 0..n_bits / 2 {
        let (b0, b1): (bool, bool) = (rng.random(), rng.random());
        let i = level(b0) + std * rng.sample::<f64, _>(StandardNormal);
        let q = level(b1) + std * rng.sample::<f64, _>(StandardNormal);
        errors += u64::from((i < 0.0) != b0) + u64::from((q < 0.0) != b1);
    }
    ErrorCount { bits: n_bits, errors }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_special_values() {
        assert_eq!(erfc(0.0), 1.0);
        assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-15);
        for x in [0.1, 0.9, 2.5, 3.0, 4.7, 6.0] {
            assert!((erfc(-x) - (2.0 - erfc(x))).abs() < 1e-15);
        }
        assert_eq!(erfc(40.0), 0.0);
        assert_eq!(erfc(f64::INFINITY), 0.0);
        assert_eq!(erfc(f64::NEG_INFINITY), 2.0);
    }

    #[test]
    fn erfc_is_continuous_across_branch_point() {
        let below = erfc(3.0 - 1e-12);
        let above = erfc(3.0);
        assert!((below - above).abs() < 1e-15);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn analytic_curves() {
        assert!((qpsk_ber(f64::NEG_INFINITY) - 0.5).abs() < 1e-15);
        assert!((qam16_ber(f64::NEG_INFINITY) - 0.375).abs() < 1e-15);
        assert!((qpsk_ber(0.0) - 0.078_649_603_525_142_57).abs() < 1e-12);
        assert!((qpsk_ber(4.0) - 0.012_500_818_040_737_56).abs() < 1e-12);
        assert!((qam16_ber(0.0) - 0.139_160_013_571_011_59).abs() < 1e-12);
    }

    #[test]
    fn qam16_never_better_than_qpsk() {
        // The two approximations cross near -6.5 dB; below that the 3/8
        // prefactor wins and the ordering flips.
        for k in 0..=400 {
            let e = -6.0 + 0.065 * k as f64;
            assert!(qam16_ber(e) >= qpsk_ber(e), "at {e} dB");
        }
    }

    #[test]
    fn curves_decrease() {
        let mut prev = (1.0, 1.0);
        for k in 0..=300 {
            let e = -10.0 + 0.1 * k as f64;
            let cur = (qpsk_ber(e), qam16_ber(e));
            assert!(cur.0 < prev.0 && cur.1 < prev.1);
            prev = cur;
        }
    }

    #[test]
    fn monte_carlo_noise_free_and_input_checks() {
        let mut r = rng::seeded(0);
        assert_eq!(qpsk_monte_carlo(f64::INFINITY, 10_000, &mut r).unwrap().errors, 0);
        assert!(qpsk_monte_carlo(3.0, 10_001, &mut r).is_err());
        assert!(qpsk_monte_carlo(3.0, 100, &mut r).is_err());
    }

    #[test]
    fn seeded_monte_carlo_is_reproducible() {
        let a = qpsk_monte_carlo_seeded(2.0, 200_000, 17).unwrap();
        let b = qpsk_monte_carlo_seeded(2.0, 200_000, 17).unwrap();
        assert_eq!(a, b);
        let p = qpsk_ber(2.0);
        assert!((a.ber() - p).abs() < 3.0 * binomial_sigma(p, a.bits));
    }

    #[test]
    fn snr_axis_conversion() {
        assert!((ebn0_to_snr_db(4.0, 2.0) - (4.0 + 10.0 * 2f64.log10())).abs() < 1e-15);
        assert_eq!(snr_to_ebn0_db(ebn0_to_snr_db(1.5, 3.0), 3.0), 1.5);
        assert_eq!(ebn0_to_snr_db(3.0, 1.0), 3.0);
    }
}
