use crate::error::{ensure, Result};
use crate::modem::BitFrame;
use crate::rng;

/// Random bit frames split 80/20 into training and test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<BitFrame>,
    pub test: Vec<BitFrame>,
    pub seed: u64,
    pub n_bits: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `n_examples` frames of fair bits in order; the first 80% form the
/// training set.
pub fn generate_dataset(n_examples: usize, n_bits: usize, seed: u64) -> Result<Dataset> {
    ensure!(n_examples >= 10, Input, "need at least 10 examples, got {n_examples}");
    ensure!(n_bits >= 1, Input, "frames need at least one bit");
    let mut r = rng::seeded(seed);
    let mut train: Vec<BitFrame> = (0..n_examples).map(|_| BitFrame::random(n_bits, &mut r)).collect();
    let test = train.split_off(n_examples * 4 / 5);
    Ok(Dataset {
        train,
        test,
        seed,
        n_bits,
    })
}
