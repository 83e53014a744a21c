//! Layer stacks with a recorded forward trace for backpropagation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::streams::{derive_stream, Domain};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::layer::{Affine, Conv2d, Layer, LayerCtx, LayerGrads, Mode};
use super::tensor::Tensor;

/// A feed-forward network: declared per-sample input shape plus layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<S: Scalar> {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer<S>>,
}

/// Forward-pass record consumed by [`Network::backward`].
pub struct Trace<S: Scalar> {
    contexts: Vec<LayerCtx<S>>,
    pub output: Tensor<S>,
}

/// Parameter gradients for the whole network, one entry per layer.
#[derive(Debug, Clone)]
pub struct Gradients<S: Scalar> {
    pub layers: Vec<LayerGrads<S>>,
}

impl<S: Scalar> Gradients<S> {
    /// Flattens gradients in the same order as [`Network::params_mut`].
    pub fn flat(&self) -> Vec<S> {
        let mut out = Vec::new();
        for lg in &self.layers {
            out.extend_from_slice(&lg.weights);
            out.extend_from_slice(&lg.bias);
        }
        out
    }
}

/// Weight-init style: fan-in-scaled uniform for ReLU-fed layers, combined
/// fan scaling for linear heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStyle {
    HeUniform,
    XavierUniform,
}

impl<S: Scalar> Network<S> {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer<S>>) -> Result<Self> {
        let net = Network { input_shape, layers };
        net.output_shape()?;
        Ok(net)
    }

    /// Per-sample output shape, validating the whole stack.
    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::shape(format!("layer {k}: {e}")))?;
        }
        Ok(shape)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Re-draws all weights from the seed: He-uniform before ReLU layers,
    /// Xavier-uniform for output heads. Biases start at zero.
    pub fn initialize(&mut self, seed: u64) {
        let styles: Vec<InitStyle> = (0..self.layers.len())
            .map(|k| {
                let feeds_relu = matches!(self.layers.get(k + 1), Some(Layer::Relu));
                if feeds_relu {
                    InitStyle::HeUniform
                } else {
                    InitStyle::XavierUniform
                }
            })
            .collect();
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let mut rng = derive_stream(seed, Domain::WeightInit, &[k as u64]);
            match layer {
                Layer::FullyConnected(a) | Layer::LinearOutput(a) => {
                    init_affine(a, styles[k], &mut rng);
                }
                Layer::Conv2d(c) => init_conv(c, styles[k], &mut rng),
                _ => {}
            }
        }
    }

    /// Mutable references to every parameter, layer order, weights before
    /// bias. Matches [`Gradients::flat`].
    pub fn params_mut(&mut self) -> Vec<&mut S> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::FullyConnected(a) | Layer::LinearOutput(a) => {
                    out.extend(a.weights.iter_mut());
                    out.extend(a.bias.iter_mut());
                }
                Layer::Conv2d(c) => {
                    out.extend(c.weights.iter_mut());
                    out.extend(c.bias.iter_mut());
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_flat(&self) -> Vec<S> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::FullyConnected(a) | Layer::LinearOutput(a) => {
                    out.extend_from_slice(&a.weights);
                    out.extend_from_slice(&a.bias);
                }
                Layer::Conv2d(c) => {
                    out.extend_from_slice(&c.weights);
                    out.extend_from_slice(&c.bias);
                }
                _ => {}
            }
        }
        out
    }

    /// Forward through `layers[..upto]`, recording contexts for backward.
    pub fn forward_upto(
        &self,
        input: &Tensor<S>,
        upto: usize,
        mode: Mode,
        rng: &mut ChaCha12Rng,
    ) -> Result<Trace<S>> {
        if input.shape[1..] != self.input_shape[..] {
            return Err(Error::shape(format!(
                "input shape {:?} does not match network input {:?}",
                &input.shape[1..],
                self.input_shape
            )));
        }
        let mut contexts = Vec::with_capacity(upto);
        let mut x = input.clone();
        for layer in &self.layers[..upto] {
            let (out, ctx) = layer.forward(&x, mode, rng)?;
            contexts.push(ctx);
            x = out;
        }
        Ok(Trace { contexts, output: x })
    }

    pub fn forward_trace(&self, input: &Tensor<S>, mode: Mode, rng: &mut ChaCha12Rng) -> Result<Trace<S>> {
        self.forward_upto(input, self.layers.len(), mode, rng)
    }

    /// Inference pass: eval mode, no trace retained.
    pub fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        let mut rng = derive_stream(0, Domain::Dropout, &[]);
        Ok(self.forward_trace(input, Mode::Eval, &mut rng)?.output)
    }

    /// Backpropagates `grad_output` through the traced layers, returning
    /// parameter gradients (one entry per traced layer).
    pub fn backward(&self, trace: &Trace<S>, grad_output: &Tensor<S>) -> Gradients<S> {
        let mut grads: Vec<LayerGrads<S>> = Vec::with_capacity(trace.contexts.len());
        let mut g = grad_output.clone();
        for (layer, ctx) in self.layers[..trace.contexts.len()]
            .iter()
            .zip(trace.contexts.iter())
            .rev()
        {
            let (grad_in, layer_grads) = layer.backward(ctx, &g);
            grads.push(layer_grads);
            g = grad_in;
        }
        grads.reverse();
        Gradients { layers: grads }
    }
}

fn init_affine<S: Scalar>(a: &mut Affine<S>, style: InitStyle, rng: &mut ChaCha12Rng) {
    let limit = match style {
        InitStyle::HeUniform => (6.0 / a.fan_in as f64).sqrt(),
        InitStyle::XavierUniform => (6.0 / (a.fan_in + a.fan_out) as f64).sqrt(),
    };
    for w in &mut a.weights {
        *w = S::from_f64_lossy((2.0 * rng.random::<f64>() - 1.0) * limit);
    }
    for b in &mut a.bias {
        *b = S::zero();
    }
}

fn init_conv<S: Scalar>(c: &mut Conv2d<S>, style: InitStyle, rng: &mut ChaCha12Rng) {
    let fan_in = c.in_channels * c.kernel_h * c.kernel_w;
    let fan_out = c.out_channels * c.kernel_h * c.kernel_w;
    let limit = match style {
        InitStyle::HeUniform => (6.0 / fan_in as f64).sqrt(),
        InitStyle::XavierUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    for w in &mut c.weights {
        *w = S::from_f64_lossy((2.0 * rng.random::<f64>() - 1.0) * limit);
    }
    for b in &mut c.bias {
        *b = S::zero();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net() -> Network<f64> {
        let mut net = Network::new(
            vec![4],
            vec![
                Layer::FullyConnected(Affine::zeros(4, 3)),
                Layer::Relu,
                Layer::LinearOutput(Affine::zeros(3, 2)),
            ],
        )
        .unwrap();
        net.initialize(7);
        net
    }

    #[test]
    fn empty_network_has_zero_parameters() {
        let net = Network::<f64>::new(vec![4], Vec::new()).unwrap();
        assert_eq!(net.parameter_count(), 0);
        assert_eq!(net.output_shape().unwrap(), vec![4]);
    }

    #[test]
    fn parameter_count_sums_weights_and_biases() {
        let net = tiny_net();
        assert_eq!(net.parameter_count(), 4 * 3 + 3 + 3 * 2 + 2);
        assert_eq!(net.params_flat().len(), net.parameter_count());
    }

    #[test]
    fn initialization_is_seeded_and_reproducible() {
        let mut a = tiny_net();
        let mut b = tiny_net();
        a.initialize(9);
        b.initialize(9);
        assert_eq!(a.params_flat(), b.params_flat());
        b.initialize(10);
        assert_ne!(a.params_flat(), b.params_flat());
    }

    #[test]
    fn forward_checks_input_shape() {
        let net = tiny_net();
        let wrong = Tensor::zeros(vec![2, 5]);
        assert!(net.forward(&wrong).is_err());
        let ok = Tensor::zeros(vec![2, 4]);
        let out = net.forward(&ok).unwrap();
        assert_eq!(out.shape, vec![2, 2]);
    }

    #[test]
    fn params_mut_matches_gradient_order() {
        let mut net = tiny_net();
        let input = Tensor::new(vec![1, 4], vec![0.1, -0.2, 0.3, 0.4]).unwrap();
        let mut rng = derive_stream(0, Domain::Dropout, &[]);
        let trace = net.forward_trace(&input, Mode::Eval, &mut rng).unwrap();
        let cotangent = Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap();
        let grads = net.backward(&trace, &cotangent);
        let flat = grads.flat();
        assert_eq!(flat.len(), net.parameter_count());
        assert_eq!(net.params_mut().len(), flat.len());
    }
}
