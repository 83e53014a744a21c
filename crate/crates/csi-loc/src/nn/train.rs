//! Mini-batch training loop.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::streams::{derive_stream, Domain};
use rand::seq::SliceRandom;

use super::layer::{Layer, Mode};
use super::loss::{cross_entropy_loss, mde_loss};
use super::network::Network;
use super::optim::{Optimizer, OptimizerKind};
use super::tensor::Tensor;

/// Training hyperparameters. Defaults: adam at 1e-3, batch 32, dropout on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dropout_active: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::adam(),
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            dropout_active: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 && self.epochs > 0 {
            // Zero learning rate is allowed for no-op runs; negative is not.
            if self.learning_rate < 0.0 {
                return Err(Error::config("learning_rate must be nonnegative"));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Loss selection for [`train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Mean Euclidean distance between predicted and label coordinates.
    MeanDistance,
    /// Mean distance plus `alpha * ||perturbation||` per sample. The added
    /// term does not depend on predictions, so gradients equal plain
    /// mean-distance gradients.
    AugmentedMeanDistance { alpha: f64 },
    /// Softmax cross-entropy on logits. A trailing softmax output layer is
    /// bypassed during training (the loss fuses it) and still applies at
    /// inference.
    CrossEntropy,
}

/// Supervision targets for a training set.
#[derive(Debug, Clone)]
pub enum TrainTargets<S: Scalar> {
    Coords {
        /// Per-sample label coordinates (all rows the same length).
        labels: Vec<Vec<S>>,
        /// Per-sample perturbation norms; zero for unaugmented samples.
        deltas: Vec<S>,
    },
    Classes(Vec<usize>),
}

/// A training set: flattened per-sample inputs plus targets.
#[derive(Debug, Clone)]
pub struct TrainSet<S: Scalar> {
    pub sample_shape: Vec<usize>,
    pub inputs: Vec<Vec<S>>,
    pub targets: TrainTargets<S>,
}

impl<S: Scalar> TrainSet<S> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::domain("training set is empty"));
        }
        let per: usize = self.sample_shape.iter().product();
        if let Some(bad) = self.inputs.iter().position(|x| x.len() != per) {
            return Err(Error::shape(format!(
                "training sample {bad} has {} values for shape {:?}",
                self.inputs[bad].len(),
                self.sample_shape
            )));
        }
        let target_len = match &self.targets {
            TrainTargets::Coords { labels, deltas } => {
                if let Some(first) = labels.first() {
                    if labels.iter().any(|l| l.len() != first.len()) {
                        return Err(Error::shape("label rows have mixed lengths"));
                    }
                }
                if deltas.len() != labels.len() {
                    return Err(Error::shape("deltas length does not match labels"));
                }
                labels.len()
            }
            TrainTargets::Classes(classes) => classes.len(),
        };
        if target_len != self.inputs.len() {
            return Err(Error::shape(format!(
                "{target_len} targets for {} inputs",
                self.inputs.len()
            )));
        }
        Ok(())
    }
}

/// Trains the network in place, returning the per-epoch mean loss history.
/// Deterministic in `config.seed`: shuffling, dropout masks, and updates all
/// derive from it.
pub fn train<S: Scalar>(
    network: &mut Network<S>,
    data: &TrainSet<S>,
    loss: LossKind,
    config: &TrainConfig,
) -> Result<Vec<S>> {
    config.validate()?;
    data.validate()?;

    // Cross-entropy consumes logits; skip a trailing softmax head here.
    let trained_depth = match (loss, network.layers.last()) {
        (LossKind::CrossEntropy, Some(Layer::SoftmaxOutput)) => network.layers.len() - 1,
        _ => network.layers.len(),
    };

    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, network.parameter_count());
    let mode = if config.dropout_active { Mode::Train } else { Mode::Eval };
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut shuffle_rng = derive_stream(config.seed, Domain::Shuffle, &[epoch as u64]);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = S::zero();
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<&[S]> = chunk.iter().map(|&i| data.inputs[i].as_slice()).collect();
            let batch = Tensor::from_samples(&data.sample_shape, &samples)?;
            let mut dropout_rng =
                derive_stream(config.seed, Domain::Dropout, &[epoch as u64, batch_idx as u64]);
            let trace = network.forward_upto(&batch, trained_depth, mode, &mut dropout_rng)?;

            let (batch_loss, grad) = match (&loss, &data.targets) {
                (LossKind::MeanDistance, TrainTargets::Coords { labels, .. }) => {
                    let label_rows: Vec<&[S]> = chunk.iter().map(|&i| labels[i].as_slice()).collect();
                    let label_t = Tensor::from_samples(&[label_rows[0].len()], &label_rows)?;
                    mde_loss(&trace.output, &label_t)?
                }
                (LossKind::AugmentedMeanDistance { alpha }, TrainTargets::Coords { labels, deltas }) => {
                    let label_rows: Vec<&[S]> = chunk.iter().map(|&i| labels[i].as_slice()).collect();
                    let label_t = Tensor::from_samples(&[label_rows[0].len()], &label_rows)?;
                    let (base, grad) = mde_loss(&trace.output, &label_t)?;
                    let mean_delta = chunk
                        .iter()
                        .fold(S::zero(), |acc, &i| acc + deltas[i])
                        / S::from_f64_lossy(chunk.len() as f64);
                    (base + S::from_f64_lossy(*alpha) * mean_delta, grad)
                }
                (LossKind::CrossEntropy, TrainTargets::Classes(classes)) => {
                    let batch_classes: Vec<usize> = chunk.iter().map(|&i| classes[i]).collect();
                    cross_entropy_loss(&trace.output, &batch_classes)?
                }
                _ => {
                    return Err(Error::config(
                        "loss kind does not match target kind (coords vs classes)",
                    ))
                }
            };

            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_idx,
                    msg: format!("loss = {batch_loss}"),
                });
            }

            let grads = network.backward(&trace, &grad);
            let flat = grads.flat();
            let mut params = network.params_mut();
            optimizer.step(&mut params, &flat);

            epoch_loss += batch_loss * S::from_f64_lossy(chunk.len() as f64);
        }
        history.push(epoch_loss / S::from_f64_lossy(n as f64));
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Affine;

    fn line_fit_data() -> TrainSet<f64> {
        // y = 2x over a handful of points; 1-D absolute-distance loss.
        let xs: Vec<f64> = (0..16).map(|k| k as f64 / 8.0 - 1.0).collect();
        TrainSet {
            sample_shape: vec![1],
            inputs: xs.iter().map(|&x| vec![x]).collect(),
            targets: TrainTargets::Coords {
                labels: xs.iter().map(|&x| vec![2.0 * x]).collect(),
                deltas: vec![0.0; xs.len()],
            },
        }
    }

    fn line_net(seed: u64) -> Network<f64> {
        let mut net = Network::new(vec![1], vec![Layer::LinearOutput(Affine::zeros(1, 1))]).unwrap();
        net.initialize(seed);
        net
    }

    #[test]
    fn linear_net_learns_slope_two() {
        let mut net = line_net(3);
        let config = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 4,
            epochs: 1200,
            seed: 1,
            ..TrainConfig::default()
        };
        let history = train(&mut net, &line_fit_data(), LossKind::MeanDistance, &config).unwrap();
        assert!(history.last().unwrap() < &0.02, "final loss {:?}", history.last());
        let params = net.params_flat();
        assert!((params[0] - 2.0).abs() < 1e-2, "weight {}", params[0]);
        assert!(params[1].abs() < 2e-2, "bias {}", params[1]);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut net = line_net(5);
        let before = net.params_flat();
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            seed: 2,
            ..TrainConfig::default()
        };
        train(&mut net, &line_fit_data(), LossKind::MeanDistance, &config).unwrap();
        assert_eq!(net.params_flat(), before);
    }

    #[test]
    fn same_seed_gives_identical_history_and_weights() {
        let run = || {
            let mut net = line_net(8);
            let config = TrainConfig {
                learning_rate: 0.01,
                batch_size: 4,
                epochs: 20,
                seed: 11,
                ..TrainConfig::default()
            };
            let h = train(&mut net, &line_fit_data(), LossKind::MeanDistance, &config).unwrap();
            (h, net.params_flat())
        };
        let (h1, p1) = run();
        let (h2, p2) = run();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn divergence_reports_epoch_and_batch() {
        let mut net = line_net(3);
        // Absurd learning rate blows the parameters up.
        let config = TrainConfig {
            optimizer: OptimizerKind::SgdMomentum { momentum: 0.9 },
            learning_rate: 1e30,
            batch_size: 4,
            epochs: 50,
            seed: 1,
            ..TrainConfig::default()
        };
        let mut data = line_fit_data();
        // Huge targets amplify the blowup.
        if let TrainTargets::Coords { labels, .. } = &mut data.targets {
            for l in labels.iter_mut() {
                l[0] *= 1e200;
            }
        }
        match train(&mut net, &data, LossKind::MeanDistance, &config) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_loss_and_targets_is_config_error() {
        let mut net = line_net(3);
        let data = line_fit_data();
        assert!(matches!(
            train(&mut net, &data, LossKind::CrossEntropy, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }
}
