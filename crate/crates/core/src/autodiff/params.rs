use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

/// Named trainable arrays with their gradient buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        ensure!(
            self.find(&name).is_none(),
            Config,
            "duplicate parameter name {name}"
        );
        self.params.push(Param {
            name,
            value,
            grad: None,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn to_checkpoint(&self, metadata: serde_json::Value) -> Checkpoint {
        Checkpoint {
            metadata,
            params: self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Overwrites every parameter from a checkpoint with matching names and shapes.
    pub fn load(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        ensure!(
            checkpoint.params.len() == self.params.len(),
            Config,
            "checkpoint has {} parameters, network has {}",
            checkpoint.params.len(),
            self.params.len()
        );
        for p in &mut self.params {
            let stored = checkpoint
                .params
                .get(&p.name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {}", p.name)))?;
            ensure!(
                stored.shape() == p.value.shape(),
                Config,
                "parameter {} has shape {:?} in checkpoint, {:?} in network",
                p.name,
                stored.shape(),
                p.value.shape()
            );
            p.value = stored.clone();
            p.grad = None;
        }
        Ok(())
    }
}

/// Uniform Glorot initialization: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape, values).expect("shape product matches value count")
}

/// JSON parameter checkpoint: layer-qualified names mapped to `{shape, values}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub metadata: serde_json::Value,
    pub params: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        for (name, t) in &cp.params {
            let n: usize = t.shape().iter().product();
            ensure!(
                n == t.len(),
                Dimension,
                "parameter {name}: shape {:?} does not match {} values",
                t.shape(),
                t.len()
            );
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut r = rng::seeded(7);
        let mut store = ParamStore::new();
        store
            .add("dense.weight", glorot_uniform(vec![3, 4], 3, 4, &mut r))
            .unwrap();
        store.add("dense.bias", Tensor::zeros(vec![4])).unwrap();
        let cp = store.to_checkpoint(serde_json::json!({"seed": 7}));
        let back = Checkpoint::from_json(&cp.to_json().unwrap()).unwrap();
        assert_eq!(back, cp);
        let mut other = store.clone();
        other.get_mut(ParamId(0)).value.values_mut()[0] = 99.0;
        other.load(&back).unwrap();
        assert_eq!(other, store);
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let mut a = ParamStore::new();
        a.add("w", Tensor::zeros(vec![2, 2])).unwrap();
        let mut b = ParamStore::new();
        b.add("w", Tensor::zeros(vec![4])).unwrap();
        assert!(b.load(&a.to_checkpoint(serde_json::Value::Null)).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let mut r = rng::seeded(1);
        let t = glorot_uniform(vec![10, 20], 10, 20, &mut r);
        let a = (6.0f64 / 30.0).sqrt();
        assert!(t.values().iter().all(|v| v.abs() < a));
    }
}
