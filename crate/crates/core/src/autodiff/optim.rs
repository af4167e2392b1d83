use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    /// RMSprop decay of the running mean square.
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
}

mod defaults {
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn rho() -> f64 {
        0.9
    }
    pub fn epsilon() -> f64 {
        1e-8
    }
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            rho: defaults::rho(),
            epsilon: defaults::epsilon(),
        }
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Rmsprop,
            ..Self::adam(learning_rate)
        }
    }

    /// A zero learning rate is accepted and freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            Config,
            "learning_rate must be a finite non-negative number, got {}",
            self.learning_rate
        );
        ensure!(self.epsilon >= 0.0, Config, "epsilon must be >= 0, got {}", self.epsilon);
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("rho", self.rho)] {
            ensure!(v > 0.0 && v < 1.0, Config, "{name} must lie in (0, 1), got {v}");
        }
        Ok(())
    }
}

/// Adam or RMSprop state for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: OptimizerConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParamStore) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        Ok(Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place from the gradient buffers in `params`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        ensure!(
            params.len() == self.second.len(),
            State,
            "optimizer tracks {} parameters, store has {}",
            self.second.len(),
            params.len()
        );
        for (i, (_, p)) in params.iter().enumerate() {
            let grad = p
                .grad
                .as_ref()
                .ok_or_else(|| Error::State(format!("parameter {} has no gradient", p.name)))?;
            ensure!(
                grad.len() == self.second[i].len(),
                State,
                "gradient for {} has {} values, expected {}",
                p.name,
                grad.len(),
                self.second[i].len()
            );
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (bc1, bc2) = (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t));
        for (i, p) in params.iter_mut().enumerate() {
            let grad = p.grad.as_ref().expect("checked above").values();
            let values = p.value.values_mut();
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            match c.kind {
                OptimizerKind::Adam => {
                    for j in 0..values.len() {
                        let g = grad[j];
                        m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                        v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                        let (mh, vh) = (m[j] / bc1, v[j] / bc2);
                        values[j] -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
                    }
                }
                OptimizerKind::Rmsprop => {
                    for j in 0..values.len() {
                        let g = grad[j];
                        v[j] = c.rho * v[j] + (1.0 - c.rho) * g * g;
                        let denom = v[j].sqrt() + c.epsilon;
                        if denom > 0.0 {
                            values[j] -= c.learning_rate * g / denom;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store_with_grad(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::scalar(value)).unwrap();
        s.get_mut(id).grad = Some(Tensor::scalar(grad));
        s
    }

    fn value(s: &ParamStore) -> f64 {
        s.iter().next().unwrap().1.value.values()[0]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for cfg in [OptimizerConfig::adam(1e-3), OptimizerConfig::rmsprop(1e-3)] {
            let mut s = store_with_grad(0.7, 0.0);
            let mut opt = OptimizerState::new(cfg, &s).unwrap();
            opt.step(&mut s).unwrap();
            assert_eq!(value(&s), 0.7);
            assert_eq!(opt.steps(), 1);
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut s = store_with_grad(0.0, 1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::adam(1e-3), &s).unwrap();
        opt.step(&mut s).unwrap();
        assert!((value(&s) + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn rmsprop_first_step_closed_form() {
        let mut s = store_with_grad(0.0, 1.0);
        let cfg = OptimizerConfig {
            epsilon: 0.0,
            ..OptimizerConfig::rmsprop(1e-3)
        };
        let mut opt = OptimizerState::new(cfg, &s).unwrap();
        opt.step(&mut s).unwrap();
        assert!((value(&s) + 1e-3 / 0.1f64.sqrt()).abs() < 1e-15);
        assert!((value(&s) + 3.1623e-3).abs() < 1e-7);
    }

    #[test]
    fn missing_gradient_is_state_error() {
        let mut s = ParamStore::new();
        s.add("p", Tensor::scalar(1.0)).unwrap();
        let mut opt = OptimizerState::new(OptimizerConfig::adam(1e-3), &s).unwrap();
        assert!(matches!(opt.step(&mut s), Err(Error::State(_))));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let s = ParamStore::new();
        assert!(OptimizerState::new(OptimizerConfig::adam(-1.0), &s).is_err());
        let cfg = OptimizerConfig {
            beta1: 1.0,
            ..OptimizerConfig::adam(1e-3)
        };
        assert!(OptimizerState::new(cfg, &s).is_err());
    }
}
