//! Perturbation-based training-set augmentation.
//!
//! For every reference point, extra CSI bursts are synthesized at locations
//! drawn uniformly on a small disk around the RP and labeled as the RP
//! itself. Records keep the true capture location alongside the label, so
//! evaluation can always score against ground truth. The companion loss adds
//! `alpha * ||perturbation||` per sample to the distance loss; the term does
//! not depend on the prediction, so gradients are unchanged.

use crate::channel_sim::{self, SceneConfig};
use crate::csi_data::Dataset;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::nn::loss::mde_loss;
use crate::nn::Tensor;
use crate::scalar::Scalar;
use crate::streams::{derive_stream, uniform_angle, Domain};
use rand::Rng;

/// Augmentation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Disk radius the perturbations are drawn from, meters.
    pub perturbation_radius: f64,
    /// Synthesized records per reference point.
    pub samples_per_rp: usize,
    /// Fine-tuning coefficient of the augmented loss, in `[-1, 1]`.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            perturbation_radius: 0.10,
            samples_per_rp: 4,
            alpha: 0.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.perturbation_radius <= 0.0 {
            return Err(Error::config("perturbation_radius must be positive"));
        }
        if !(-1.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha must be in [-1, 1]"));
        }
        Ok(())
    }
}

/// Expands a dataset with perturbed samples around each reference point.
///
/// The radius must stay well below the RP spacing (under a quarter of the
/// smallest pairwise RP distance), otherwise labels stop being meaningful.
/// Original records are retained; each new record stores the perturbed
/// location as `location` and the RP as `label_location`.
pub fn augment_dataset(scene: &SceneConfig, base: &Dataset, config: &AugmentConfig) -> Result<Dataset> {
    config.validate()?;
    if base.records.is_empty() {
        return Err(Error::domain("base dataset is empty"));
    }

    // Distinct RPs in first-appearance order; augmentation targets the label
    // locations of unaugmented records.
    let mut rps: Vec<Point2> = Vec::new();
    let mut packets_at: Vec<usize> = Vec::new();
    for rec in &base.records {
        if rec.is_augmented() {
            continue;
        }
        if !rps.contains(&rec.label_location) {
            rps.push(rec.label_location);
            packets_at.push(rec.symbols.len());
        }
    }
    if rps.is_empty() {
        return Err(Error::domain("base dataset has no unaugmented reference-point records"));
    }

    if rps.len() >= 2 {
        let mut min_spacing = f64::INFINITY;
        for i in 0..rps.len() {
            for j in i + 1..rps.len() {
                min_spacing = min_spacing.min(rps[i].distance(rps[j]));
            }
        }
        if config.perturbation_radius >= min_spacing / 4.0 {
            return Err(Error::config(format!(
                "perturbation_radius {} must be below a quarter of the RP spacing {min_spacing}",
                config.perturbation_radius
            )));
        }
    }

    let mut records = base.records.clone();
    for (rp_idx, (&rp, &packets)) in rps.iter().zip(packets_at.iter()).enumerate() {
        for sample in 0..config.samples_per_rp {
            let mut rng = derive_stream(config.seed, Domain::Augment, &[rp_idx as u64, sample as u64]);
            // Uniform draw on the disk.
            let radius = config.perturbation_radius * rng.random::<f64>().sqrt();
            let angle = uniform_angle(&mut rng);
            let perturbed = rp.add(radius * angle.cos(), radius * angle.sin());
            if !scene.contains(perturbed) {
                return Err(Error::domain(format!(
                    "perturbed location ({:.3}, {:.3}) fell outside the room",
                    perturbed.x, perturbed.y
                )));
            }
            let generated = channel_sim::generate_dataset(scene, packets, &[perturbed])?;
            let mut rec = generated.records.into_iter().next().expect("one record per location");
            rec.label_location = rp;
            records.push(rec);
        }
    }
    Dataset::new(base.n_rx, base.n_sc, records)
}

/// Distance loss with the perturbation term:
/// `(1/B) * sum_b (||pred_b - label_b|| + alpha * delta_b)`.
///
/// `perturbation_norms` holds `delta_b = ||true_b - label_b||`, zero for
/// unaugmented samples. The added term is constant in the predictions, so the
/// gradient equals the plain mean-distance gradient.
pub fn augmented_loss<S: Scalar>(
    predictions: &Tensor<S>,
    labels: &Tensor<S>,
    perturbation_norms: &[S],
    alpha: f64,
) -> Result<(S, Tensor<S>)> {
    if perturbation_norms.len() != predictions.batch() {
        return Err(Error::shape(format!(
            "{} perturbation norms for batch {}",
            perturbation_norms.len(),
            predictions.batch()
        )));
    }
    if let Some(bad) = perturbation_norms.iter().find(|d| **d < S::zero()) {
        return Err(Error::domain(format!("negative perturbation norm {bad}")));
    }
    let (base, grad) = mde_loss(predictions, labels)?;
    let mean_delta = perturbation_norms.iter().fold(S::zero(), |acc, &d| acc + d)
        / S::from_f64_lossy(predictions.batch() as f64);
    Ok((base + S::from_f64_lossy(alpha) * mean_delta, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_sim::generate_dataset;

    fn base_scene() -> SceneConfig {
        let mut scene = SceneConfig::standard();
        scene.noise_std = 0.01;
        scene
    }

    #[test]
    fn augmentation_counts_labels_and_radius() {
        let scene = base_scene();
        let rps = scene.rp_locations();
        let base = generate_dataset(&scene, 2, &rps).unwrap();
        let config = AugmentConfig { samples_per_rp: 3, seed: 5, ..AugmentConfig::default() };
        let augmented = augment_dataset(&scene, &base, &config).unwrap();

        assert_eq!(augmented.records.len(), 15 + 15 * 3);
        for rec in &augmented.records[15..] {
            assert!(rec.is_augmented() || rec.location.distance(rec.label_location) == 0.0);
            assert!(
                rps.contains(&rec.label_location),
                "label {:?} is not an original RP",
                rec.label_location
            );
            let delta = rec.location.distance(rec.label_location);
            assert!(delta <= 0.10 + 1e-12, "delta {delta}");
            assert_eq!(rec.symbols.len(), 2);
        }
    }

    #[test]
    fn zero_samples_returns_input_unchanged() {
        let scene = base_scene();
        let base = generate_dataset(&scene, 2, &scene.rp_locations()).unwrap();
        let config = AugmentConfig { samples_per_rp: 0, ..AugmentConfig::default() };
        let out = augment_dataset(&scene, &base, &config).unwrap();
        assert_eq!(out, base);
    }

    #[test]
    fn oversized_radius_is_a_config_error() {
        let scene = base_scene();
        let base = generate_dataset(&scene, 1, &scene.rp_locations()).unwrap();
        let config = AugmentConfig { perturbation_radius: 0.3, ..AugmentConfig::default() };
        match augment_dataset(&scene, &base, &config) {
            Err(Error::Config(msg)) => assert!(msg.contains("quarter")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn augmentation_is_deterministic_per_seed() {
        let scene = base_scene();
        let base = generate_dataset(&scene, 2, &scene.rp_locations()[..4]).unwrap();
        let config = AugmentConfig { samples_per_rp: 2, seed: 9, ..AugmentConfig::default() };
        let a = augment_dataset(&scene, &base, &config).unwrap();
        let b = augment_dataset(&scene, &base, &config).unwrap();
        assert_eq!(a, b);
        let c = augment_dataset(
            &scene,
            &base,
            &AugmentConfig { seed: 10, ..config },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn alpha_zero_reduces_to_plain_mde() {
        let pred = Tensor::<f64>::new(vec![2, 2], vec![1.0, 2.0, 3.0, 1.0]).unwrap();
        let label = Tensor::new(vec![2, 2], vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let deltas = [0.05, 0.1];
        let (plain, plain_grad) = mde_loss(&pred, &label).unwrap();
        let (aug0, grad0) = augmented_loss(&pred, &label, &deltas, 0.0).unwrap();
        assert_eq!(plain, aug0);
        assert_eq!(plain_grad.values, grad0.values);
    }

    #[test]
    fn alpha_term_shifts_loss_but_not_gradient() {
        let pred = Tensor::<f64>::new(vec![1, 2], vec![0.3, 0.4]).unwrap();
        let label = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let (base, base_grad) = mde_loss(&pred, &label).unwrap();
        assert!((base - 0.5).abs() < 1e-12);
        let (loss, grad) = augmented_loss(&pred, &label, &[0.1], 1.0).unwrap();
        assert!((loss - 0.6).abs() < 1e-12);
        assert_eq!(grad.values, base_grad.values);
        // Gradient invariance holds across the alpha range.
        for alpha in [-1.0, -0.3, 0.7] {
            let (_, g) = augmented_loss(&pred, &label, &[0.1], alpha).unwrap();
            assert_eq!(g.values, base_grad.values);
        }
    }

    #[test]
    fn triangle_inequality_sandwich_holds_numerically() {
        use rand::Rng;
        let mut rng = derive_stream(3, Domain::Augment, &[99]);
        for _ in 0..200 {
            let pred = Point2::new(rng.random::<f64>() * 8.0, rng.random::<f64>() * 6.0);
            let label = Point2::new(rng.random::<f64>() * 8.0, rng.random::<f64>() * 6.0);
            let angle = uniform_angle(&mut rng);
            let delta = 0.1 * rng.random::<f64>().sqrt();
            let truth = label.add(delta * angle.cos(), delta * angle.sin());
            let to_label = pred.distance(label);
            let to_truth = pred.distance(truth);
            assert!(to_truth >= to_label - delta - 1e-12);
            assert!(to_truth <= to_label + delta + 1e-12);
        }
    }
}
