//! Encoder/decoder networks, the assembled channel autoencoder, the bit
//! slicer, and the radio transformer (RTN) synchronization stage.

mod arch;
mod network;
mod rtn;

pub use arch::{DecodeMode, ModemArch, ModemKind, NetworkSpec, RtnConfig};
pub use network::{build_autoencoder, decode, encode, Network, RtnMode};
pub use rtn::{rtn_estimate, rtn_transform, RtnParams};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::Rng;

/// Fixed-length sequence of bits, each 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct BitFrame(Vec<u8>);

impl BitFrame {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        ensure!(
            bits.iter().all(|&b| b <= 1),
            Input,
            "bit frames may only contain 0 and 1"
        );
        Ok(Self(bits))
    }

    pub fn random(n: usize, rng: &mut Rng) -> Self {
        Self((0..n).map(|_| u8::from(rng.random::<bool>())).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_reals(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|&b| f64::from(b))
    }

    /// Number of positions where the frames differ.
    pub fn errors_against(&self, other: &BitFrame) -> u64 {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count() as u64
    }
}

impl TryFrom<Vec<u8>> for BitFrame {
    type Error = crate::Error;
    fn try_from(v: Vec<u8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BitFrame> for Vec<u8> {
    fn from(b: BitFrame) -> Self {
        b.0
    }
}

/// Likelihood-like decoder outputs, one per bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftBits(pub Vec<f64>);

impl SoftBits {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Hard decisions: 0 below `gamma`, 1 at or above it.
pub fn slice_bits(soft: &SoftBits, gamma: f64) -> BitFrame {
    BitFrame(soft.0.iter().map(|&l| u8::from(l >= gamma)).collect())
}
