//! Mini-batch optimizers over flattened parameter vectors.

use crate::scalar::Scalar;

/// Optimizer selection with per-kind hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn sgd_momentum() -> Self {
        OptimizerKind::SgdMomentum { momentum: 0.9 }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Optimizer state sized to the parameter count.
pub struct Optimizer<S: Scalar> {
    kind: OptimizerKind,
    learning_rate: S,
    step: u64,
    first_moment: Vec<S>,
    second_moment: Vec<S>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(kind: OptimizerKind, learning_rate: f64, n_params: usize) -> Self {
        Optimizer {
            kind,
            learning_rate: S::from_f64_lossy(learning_rate),
            step: 0,
            first_moment: vec![S::zero(); n_params],
            second_moment: vec![S::zero(); n_params],
        }
    }

    /// Applies one update in place; `grads` must match the parameter order.
    pub fn step(&mut self, params: &mut [&mut S], grads: &[S]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                let mu = S::from_f64_lossy(momentum);
                for ((p, &g), v) in params.iter_mut().zip(grads.iter()).zip(self.first_moment.iter_mut()) {
                    *v = mu * *v - self.learning_rate * g;
                    **p += *v;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let b1 = S::from_f64_lossy(beta1);
                let b2 = S::from_f64_lossy(beta2);
                let eps = S::from_f64_lossy(epsilon);
                let one = S::one();
                let bias1 = one - S::from_f64_lossy(beta1.powi(self.step as i32));
                let bias2 = one - S::from_f64_lossy(beta2.powi(self.step as i32));
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grads.iter())
                    .zip(self.first_moment.iter_mut())
                    .zip(self.second_moment.iter_mut())
                {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    **p -= self.learning_rate * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
