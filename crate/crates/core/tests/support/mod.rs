#![allow(dead_code, clippy::excessive_precision)]

use chanae_core::channel::{draw_channel, ChannelConfig};
use chanae_core::rng;

// erfc(x) for x = 0, 0.25, ..., 6, evaluated with 50-digit arithmetic.
pub const ERFC_GRID: [f64; 25] = [
    1.0,
    0.723_673_609_831_763_067_0,
    0.479_500_122_186_953_462_3,
    0.288_844_366_346_484_868_4,
    0.157_299_207_050_285_130_7,
    0.077_099_871_743_541_769_86,
    0.033_894_853_524_689_272_93,
    0.013_328_328_780_817_556_23,
    0.004_677_734_981_047_265_838,
    0.001_462_716_586_681_151_698,
    0.000_406_952_017_444_958_939_6,
    0.000_100_621_922_119_636_836_9,
    2.209_049_699_858_544_137e-5,
    4.302_779_463_675_121_830e-6,
    7.430_983_723_414_127_455e-7,
    1.137_272_565_697_966_533e-7,
    1.541_725_790_028_001_885e-8,
    1.850_574_137_386_742_520e-9,
    1.966_160_441_542_887_476e-10,
    1.848_504_772_148_531_089e-11,
    1.537_459_794_428_034_850e-12,
    1.131_031_326_688_715_388e-13,
    7.357_847_917_974_398_063e-15,
    4.232_136_617_425_737_626e-16,
    2.151_973_671_249_891_312e-17,
];

pub fn erfc_grid_x(k: usize) -> f64 {
    0.25 * k as f64
}

/// Mean noise power in dB over `samples` complex samples drawn at `snr_db`.
pub fn measured_noise_db(snr_db: f64, samples: usize, seed: u64) -> f64 {
    let cfg = ChannelConfig::awgn(snr_db);
    let mut r = rng::seeded(seed);
    let (mut power, mut seen) = (0.0, 0usize);
    while seen < samples {
        let d = draw_channel(&cfg, 1000, &mut r).unwrap();
        power += d.noise.values().iter().map(|v| v * v).sum::<f64>();
        seen += 1000;
    }
    10.0 * (power / seen as f64).log10()
}
