//! Benchmark fixtures shared by the criterion targets.

use chanae_core::autodiff::{Layer, LayerKind, ParamStore};
use chanae_core::channel::{normalize_power, SignalFrame};
use chanae_core::{rng, Tensor};

/// A single layer with Glorot-initialized parameters.
pub fn layer(kind: LayerKind) -> (Layer, ParamStore) {
    let mut store = ParamStore::new();
    let layer = Layer::new("bench", kind, &mut store, &mut rng::seeded(0)).expect("valid layer");
    (layer, store)
}

/// Deterministic input filled with a slow ramp.
pub fn input(shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let values = (0..n).map(|k| ((k % 97) as f64 - 48.0) / 48.0).collect();
    Tensor::new(shape, values).expect("shape matches")
}

pub fn frame(samples: usize) -> SignalFrame {
    let i = (0..samples).map(|k| (k as f64 * 0.3).sin()).collect();
    let q = (0..samples).map(|k| (k as f64 * 0.7).cos()).collect();
    normalize_power(&SignalFrame::new(i, q).expect("equal lengths")).expect("nonzero power")
}
