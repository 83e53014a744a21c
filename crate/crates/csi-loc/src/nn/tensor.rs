//! Dense row-major tensors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A dense tensor; `shape[0]` is the batch dimension everywhere in the
/// engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    pub shape: Vec<usize>,
    pub values: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, values: Vec<S>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if values.len() != expect {
            return Err(Error::shape(format!(
                "{} values for shape {shape:?}",
                values.len()
            )));
        }
        Ok(Tensor { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![S::zero(); n],
        }
    }

    /// Batch size (first dimension).
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per sample (product of all non-batch dimensions).
    pub fn sample_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn sample(&self, b: usize) -> &[S] {
        let n = self.sample_len();
        &self.values[b * n..(b + 1) * n]
    }

    /// Stacks per-sample value slices into a batch tensor with the given
    /// per-sample shape.
    pub fn from_samples(sample_shape: &[usize], samples: &[&[S]]) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        let mut values = Vec::with_capacity(per * samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.len() != per {
                return Err(Error::shape(format!(
                    "sample {i}: {} values for shape {sample_shape:?}",
                    s.len()
                )));
            }
            values.extend_from_slice(s);
        }
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(sample_shape);
        Tensor::new(shape, values)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
