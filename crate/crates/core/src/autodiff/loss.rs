use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Reconstruction loss applied elementwise to bit targets in {0,1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFn {
    Mse,
    Clmse,
    Clmee,
    Clmle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossKind {
    pub function: LossFn,
    /// Decision threshold shared with the bit slicer.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Flip the exponential and linear clipped losses so that they reward
    /// predictions on the wrong side of the threshold.
    #[serde(default)]
    pub inverted: bool,
}

fn default_gamma() -> f64 {
    0.5
}

impl LossKind {
    pub fn new(function: LossFn) -> Self {
        Self {
            function,
            gamma: default_gamma(),
            inverted: false,
        }
    }

    pub fn mse() -> Self {
        Self::new(LossFn::Mse)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.gamma > 0.0 && self.gamma < 1.0,
            Config,
            "loss gamma must lie in (0, 1), got {}",
            self.gamma
        );
        Ok(())
    }

    /// Per-element loss and its derivative with respect to the prediction.
    /// `target_is_one` selects the branch; the clip points sit at 0 and 1.
    pub fn element(&self, target_is_one: bool, p: f64) -> (f64, f64) {
        let t = if target_is_one { 1.0 } else { 0.0 };
        match (self.function, target_is_one) {
            (LossFn::Mse, _) => ((t - p) * (t - p), 2.0 * (p - t)),
            (LossFn::Clmse, false) if p > 0.0 => (p * p, 2.0 * p),
            (LossFn::Clmse, true) if p < 1.0 => ((1.0 - p) * (1.0 - p), -2.0 * (1.0 - p)),
            (LossFn::Clmse, _) => (0.0, 0.0),
            (LossFn::Clmle, false) if p > 0.0 => {
                if self.inverted {
                    (-p, -1.0)
                } else {
                    (p, 1.0)
                }
            }
            (LossFn::Clmle, true) if p < 1.0 => {
                if self.inverted {
                    (p - 1.0, 1.0)
                } else {
                    (1.0 - p, -1.0)
                }
            }
            (LossFn::Clmle, _) => (0.0, 0.0),
            (LossFn::Clmee, false) => {
                if self.inverted {
                    let e = (-p).exp();
                    (e, -e)
                } else {
                    let e = p.exp();
                    (e, e)
                }
            }
            (LossFn::Clmee, true) => {
                if self.inverted {
                    let e = (p - 1.0).exp();
                    (e, e)
                } else {
                    let e = (1.0 - p).exp();
                    (e, -e)
                }
            }
        }
    }

    /// Distance from `p` to the nearest point where the loss is not smooth.
    pub fn kink_distance(&self, target_is_one: bool, p: f64) -> f64 {
        match self.function {
            LossFn::Mse | LossFn::Clmee => f64::INFINITY,
            LossFn::Clmse | LossFn::Clmle => {
                if target_is_one {
                    (p - 1.0).abs()
                } else {
                    p.abs()
                }
            }
        }
    }
}

pub(crate) fn check_targets(targets: &[f64]) -> Result<()> {
    ensure!(
        targets.iter().all(|&t| t == 0.0 || t == 1.0),
        Input,
        "loss targets must be bits in {{0, 1}}"
    );
    Ok(())
}

/// Mean loss over all elements, without recording a graph.
pub fn loss_value(kind: &LossKind, targets: &[f64], predictions: &[f64]) -> Result<f64> {
    ensure!(
        targets.len() == predictions.len(),
        Dimension,
        "targets ({}) and predictions ({}) differ in length",
        targets.len(),
        predictions.len()
    );
    ensure!(!targets.is_empty(), Dimension, "empty loss input");
    check_targets(targets)?;
    let total: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(&t, &p)| kind.element(t == 1.0, p).0)
        .sum();
    Ok(total / targets.len() as f64)
}
