use crate::error::{ensure, Result};
use crate::tensor::Tensor;

/// Complex baseband samples as a `[2, n]` array: row 0 in-phase, row 1 quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    data: Tensor,
}

impl SignalFrame {
    pub fn new(i: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        ensure!(
            i.len() == q.len(),
            Dimension,
            "I has {} samples, Q has {}",
            i.len(),
            q.len()
        );
        let n = i.len();
        let mut v = i;
        v.extend(q);
        Self::from_tensor(Tensor::new(vec![2, n], v)?)
    }

    pub fn from_tensor(data: Tensor) -> Result<Self> {
        ensure!(
            data.shape().len() == 2 && data.shape()[0] == 2 && data.shape()[1] >= 1,
            Dimension,
            "signal frame must be [2, n] with n >= 1, got {:?}",
            data.shape()
        );
        ensure!(data.all_finite(), Input, "signal frame contains non-finite values");
        Ok(Self { data })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            data: Tensor::zeros(vec![2, n]),
        }
    }

    pub fn len(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn i(&self) -> &[f64] {
        &self.data.values()[..self.len()]
    }

    pub fn q(&self) -> &[f64] {
        &self.data.values()[self.len()..]
    }

    /// Average power per complex sample.
    pub fn power(&self) -> f64 {
        self.data.values().iter().map(|v| v * v).sum::<f64>() / self.len() as f64
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let v = self.data.values().iter().map(|&x| f(x)).collect();
        Self::from_tensor(Tensor::new(self.data.shape().to_vec(), v)?)
    }

    pub(crate) fn map_rows(&self, f: impl Fn(&[f64], &mut [f64])) -> Result<Self> {
        let n = self.len();
        let mut out = vec![0.0; 2 * n];
        let (oi, oq) = out.split_at_mut(n);
        f(self.i(), oi);
        f(self.q(), oq);
        Self::from_tensor(Tensor::new(vec![2, n], out)?)
    }
}
