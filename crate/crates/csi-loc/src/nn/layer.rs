//! Layer kinds with explicit forward and backward passes.
//!
//! The set is exactly what the two reference architectures need: affine
//! layers, 3x3 same-padding convolution, 2x2 stride-2 max pooling, ReLU,
//! inverted dropout, and a softmax output head. Convolutions require odd
//! kernel sizes so zero "same" padding keeps spatial dimensions.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::tensor::Tensor;

/// Forward-pass mode: dropout draws masks in `Train` and is the identity in
/// `Eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Parameters of an affine map `y = W x + b`, `W` stored `[fan_out x fan_in]`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<S: Scalar> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Affine<S> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Affine {
            fan_in,
            fan_out,
            weights: vec![S::zero(); fan_in * fan_out],
            bias: vec![S::zero(); fan_out],
        }
    }
}

/// Parameters of a stride-1 zero-same-padded convolution, weights stored
/// `[out_ch x in_ch x kh x kw]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<S: Scalar> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Conv2d<S> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            weights: vec![S::zero(); out_channels * in_channels * kernel_h * kernel_w],
            bias: vec![S::zero(); out_channels],
        }
    }
}

/// One network layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<S: Scalar> {
    /// Affine hidden layer.
    FullyConnected(Affine<S>),
    Conv2d(Conv2d<S>),
    Relu,
    /// 2x2 max pooling with stride 2.
    MaxPool2,
    /// Inverted dropout: zero with probability `rate`, scale survivors by
    /// `1/(1-rate)` in train mode; identity in eval mode.
    Dropout { rate: f64 },
    /// Affine output head with no nonlinearity.
    LinearOutput(Affine<S>),
    /// Row-wise softmax head.
    SoftmaxOutput,
}

/// Per-layer state captured during forward and consumed by backward.
#[derive(Debug, Clone)]
pub enum LayerCtx<S: Scalar> {
    Affine { input: Tensor<S> },
    Conv { input: Tensor<S> },
    Relu { input: Tensor<S> },
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Dropout { mask: Option<Vec<S>> },
    Softmax { output: Tensor<S> },
}

/// Parameter gradients for one layer (empty for parameterless layers).
#[derive(Debug, Clone)]
pub struct LayerGrads<S: Scalar> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::FullyConnected(a) | Layer::LinearOutput(a) => a.weights.len() + a.bias.len(),
            Layer::Conv2d(c) => c.weights.len() + c.bias.len(),
            _ => 0,
        }
    }

    /// Output sample shape for a given input sample shape (no batch dim).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::FullyConnected(a) | Layer::LinearOutput(a) => {
                let n: usize = input.iter().product();
                if n != a.fan_in {
                    return Err(Error::shape(format!(
                        "affine layer expects {} inputs, got shape {input:?}",
                        a.fan_in
                    )));
                }
                Ok(vec![a.fan_out])
            }
            Layer::Conv2d(c) => {
                if input.len() != 3 || input[0] != c.in_channels {
                    return Err(Error::shape(format!(
                        "conv layer expects [{}, h, w], got {input:?}",
                        c.in_channels
                    )));
                }
                if c.kernel_h % 2 == 0 || c.kernel_w % 2 == 0 {
                    return Err(Error::shape("same-padding convolution requires odd kernels"));
                }
                Ok(vec![c.out_channels, input[1], input[2]])
            }
            Layer::MaxPool2 => {
                if input.len() != 3 || input[1] % 2 != 0 || input[2] % 2 != 0 {
                    return Err(Error::shape(format!(
                        "max pool expects [c, even, even], got {input:?}"
                    )));
                }
                Ok(vec![input[0], input[1] / 2, input[2] / 2])
            }
            Layer::Relu | Layer::SoftmaxOutput => Ok(input.to_vec()),
            Layer::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::shape(format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(input.to_vec())
            }
        }
    }

    pub fn forward(&self, input: &Tensor<S>, mode: Mode, rng: &mut ChaCha12Rng) -> Result<(Tensor<S>, LayerCtx<S>)> {
        let out_sample = self.output_shape(&input.shape[1..])?;
        let batch = input.batch();
        let mut out_shape = vec![batch];
        out_shape.extend_from_slice(&out_sample);

        match self {
            Layer::FullyConnected(a) | Layer::LinearOutput(a) => {
                let mut out = Tensor::zeros(out_shape);
                affine_forward(a, input, &mut out);
                Ok((out, LayerCtx::Affine { input: input.clone() }))
            }
            Layer::Conv2d(c) => {
                let mut out = Tensor::zeros(out_shape);
                conv_forward(c, input, &mut out);
                Ok((out, LayerCtx::Conv { input: input.clone() }))
            }
            Layer::Relu => {
                let values = input.values.iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect();
                Ok((
                    Tensor { shape: out_shape, values },
                    LayerCtx::Relu { input: input.clone() },
                ))
            }
            Layer::MaxPool2 => {
                let (out, argmax) = pool_forward(input, &out_sample);
                Ok((out, LayerCtx::MaxPool { input_shape: input.shape.clone(), argmax }))
            }
            Layer::Dropout { rate } => {
                if mode == Mode::Eval || *rate == 0.0 {
                    return Ok((input.clone(), LayerCtx::Dropout { mask: None }));
                }
                let keep_scale = S::from_f64_lossy(1.0 / (1.0 - rate));
                let mask: Vec<S> = (0..input.values.len())
                    .map(|_| if rng.random::<f64>() < *rate { S::zero() } else { keep_scale })
                    .collect();
                let values = input.values.iter().zip(mask.iter()).map(|(&v, &m)| v * m).collect();
                Ok((
                    Tensor { shape: out_shape, values },
                    LayerCtx::Dropout { mask: Some(mask) },
                ))
            }
            Layer::SoftmaxOutput => {
                let out = softmax_forward(input);
                Ok((out.clone(), LayerCtx::Softmax { output: out }))
            }
        }
    }

    /// Propagates `grad_out` back through the layer, returning the input
    /// gradient and (for parameterized layers) parameter gradients.
    pub fn backward(&self, ctx: &LayerCtx<S>, grad_out: &Tensor<S>) -> (Tensor<S>, LayerGrads<S>) {
        match (self, ctx) {
            (Layer::FullyConnected(a) | Layer::LinearOutput(a), LayerCtx::Affine { input }) => {
                affine_backward(a, input, grad_out)
            }
            (Layer::Conv2d(c), LayerCtx::Conv { input }) => conv_backward(c, input, grad_out),
            (Layer::Relu, LayerCtx::Relu { input }) => {
                let values = input
                    .values
                    .iter()
                    .zip(grad_out.values.iter())
                    .map(|(&x, &g)| if x > S::zero() { g } else { S::zero() })
                    .collect();
                (
                    Tensor { shape: input.shape.clone(), values },
                    LayerGrads { weights: Vec::new(), bias: Vec::new() },
                )
            }
            (Layer::MaxPool2, LayerCtx::MaxPool { input_shape, argmax }) => {
                let mut grad_in = Tensor::zeros(input_shape.clone());
                for (k, &src) in argmax.iter().enumerate() {
                    grad_in.values[src] += grad_out.values[k];
                }
                (grad_in, LayerGrads { weights: Vec::new(), bias: Vec::new() })
            }
            (Layer::Dropout { .. }, LayerCtx::Dropout { mask }) => {
                let values = match mask {
                    None => grad_out.values.clone(),
                    Some(m) => grad_out.values.iter().zip(m.iter()).map(|(&g, &m)| g * m).collect(),
                };
                (
                    Tensor { shape: grad_out.shape.clone(), values },
                    LayerGrads { weights: Vec::new(), bias: Vec::new() },
                )
            }
            (Layer::SoftmaxOutput, LayerCtx::Softmax { output }) => {
                let k = output.sample_len();
                let mut values = vec![S::zero(); output.values.len()];
                for b in 0..output.batch() {
                    let y = &output.values[b * k..(b + 1) * k];
                    let g = &grad_out.values[b * k..(b + 1) * k];
                    let dot = y.iter().zip(g.iter()).fold(S::zero(), |acc, (&yi, &gi)| acc + yi * gi);
                    for i in 0..k {
                        values[b * k + i] = y[i] * (g[i] - dot);
                    }
                }
                (
                    Tensor { shape: output.shape.clone(), values },
                    LayerGrads { weights: Vec::new(), bias: Vec::new() },
                )
            }
            _ => unreachable!("layer/context mismatch"),
        }
    }
}

fn affine_forward<S: Scalar>(a: &Affine<S>, input: &Tensor<S>, out: &mut Tensor<S>) {
    let batch = input.batch();
    let n_in = a.fan_in;
    for b in 0..batch {
        let x = &input.values[b * n_in..(b + 1) * n_in];
        let y = &mut out.values[b * a.fan_out..(b + 1) * a.fan_out];
        for (o, yo) in y.iter_mut().enumerate() {
            let w = &a.weights[o * n_in..(o + 1) * n_in];
            let mut acc = a.bias[o];
            for (wi, xi) in w.iter().zip(x.iter()) {
                acc += *wi * *xi;
            }
            *yo = acc;
        }
    }
}

fn affine_backward<S: Scalar>(a: &Affine<S>, input: &Tensor<S>, grad_out: &Tensor<S>) -> (Tensor<S>, LayerGrads<S>) {
    let batch = input.batch();
    let n_in = a.fan_in;
    let n_out = a.fan_out;
    let mut grad_in = Tensor::zeros(input.shape.clone());
    let mut gw = vec![S::zero(); a.weights.len()];
    let mut gb = vec![S::zero(); n_out];
    for b in 0..batch {
        let x = &input.values[b * n_in..(b + 1) * n_in];
        let g = &grad_out.values[b * n_out..(b + 1) * n_out];
        let dx = &mut grad_in.values[b * n_in..(b + 1) * n_in];
        for o in 0..n_out {
            let go = g[o];
            if go == S::zero() {
                continue;
            }
            gb[o] += go;
            let w = &a.weights[o * n_in..(o + 1) * n_in];
            let gw_row = &mut gw[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                dx[i] += w[i] * go;
                gw_row[i] += x[i] * go;
            }
        }
    }
    (grad_in, LayerGrads { weights: gw, bias: gb })
}

fn conv_forward<S: Scalar>(c: &Conv2d<S>, input: &Tensor<S>, out: &mut Tensor<S>) {
    let batch = input.batch();
    let (h, w) = (input.shape[2], input.shape[3]);
    let (ph, pw) = (c.kernel_h / 2, c.kernel_w / 2);
    let plane = h * w;
    let in_sample = c.in_channels * plane;
    let out_sample = c.out_channels * plane;
    for b in 0..batch {
        for oc in 0..c.out_channels {
            let out_plane = &mut out.values[b * out_sample + oc * plane..b * out_sample + (oc + 1) * plane];
            for v in out_plane.iter_mut() {
                *v = c.bias[oc];
            }
            for ic in 0..c.in_channels {
                let in_plane = &input.values[b * in_sample + ic * plane..b * in_sample + (ic + 1) * plane];
                for ky in 0..c.kernel_h {
                    let dy = ky as isize - ph as isize;
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize - dy).min(h as isize) as usize;
                    for kx in 0..c.kernel_w {
                        let dx = kx as isize - pw as isize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        let wv = c.weights[((oc * c.in_channels + ic) * c.kernel_h + ky) * c.kernel_w + kx];
                        if wv == S::zero() {
                            continue;
                        }
                        for y in y0..y1 {
                            let src_row = ((y as isize + dy) as usize) * w;
                            let dst_row = y * w;
                            let src = &in_plane[src_row + (x0 as isize + dx) as usize
                                ..src_row + (x1 as isize + dx) as usize];
                            let dst = &mut out_plane[dst_row + x0..dst_row + x1];
                            for (d, s) in dst.iter_mut().zip(src.iter()) {
                                *d += wv * *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_backward<S: Scalar>(c: &Conv2d<S>, input: &Tensor<S>, grad_out: &Tensor<S>) -> (Tensor<S>, LayerGrads<S>) {
    let batch = input.batch();
    let (h, w) = (input.shape[2], input.shape[3]);
    let (ph, pw) = (c.kernel_h / 2, c.kernel_w / 2);
    let plane = h * w;
    let in_sample = c.in_channels * plane;
    let out_sample = c.out_channels * plane;
    let mut grad_in = Tensor::zeros(input.shape.clone());
    let mut gw = vec![S::zero(); c.weights.len()];
    let mut gb = vec![S::zero(); c.out_channels];

    for b in 0..batch {
        for oc in 0..c.out_channels {
            let g_plane = &grad_out.values[b * out_sample + oc * plane..b * out_sample + (oc + 1) * plane];
            for &g in g_plane.iter() {
                gb[oc] += g;
            }
            for ic in 0..c.in_channels {
                let in_plane = &input.values[b * in_sample + ic * plane..b * in_sample + (ic + 1) * plane];
                let d_plane_range = b * in_sample + ic * plane..b * in_sample + (ic + 1) * plane;
                for ky in 0..c.kernel_h {
                    let dy = ky as isize - ph as isize;
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize - dy).min(h as isize) as usize;
                    for kx in 0..c.kernel_w {
                        let dx = kx as isize - pw as isize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        let widx = ((oc * c.in_channels + ic) * c.kernel_h + ky) * c.kernel_w + kx;
                        let wv = c.weights[widx];
                        let mut wg = S::zero();
                        let d_plane = &mut grad_in.values[d_plane_range.clone()];
                        for y in y0..y1 {
                            let in_row = ((y as isize + dy) as usize) * w;
                            let out_row = y * w;
                            let xs = (x0 as isize + dx) as usize;
                            let xe = (x1 as isize + dx) as usize;
                            let src = &in_plane[in_row + xs..in_row + xe];
                            let g_row = &g_plane[out_row + x0..out_row + x1];
                            let d_row = &mut d_plane[in_row + xs..in_row + xe];
                            for ((s, g), d) in src.iter().zip(g_row.iter()).zip(d_row.iter_mut()) {
                                wg += *s * *g;
                                *d += wv * *g;
                            }
                        }
                        gw[widx] += wg;
                    }
                }
            }
        }
    }
    (grad_in, LayerGrads { weights: gw, bias: gb })
}

fn pool_forward<S: Scalar>(input: &Tensor<S>, out_sample: &[usize]) -> (Tensor<S>, Vec<usize>) {
    let batch = input.batch();
    let (ch, h, w) = (input.shape[1], input.shape[2], input.shape[3]);
    let (oh, ow) = (out_sample[1], out_sample[2]);
    let mut out_shape = vec![batch];
    out_shape.extend_from_slice(out_sample);
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out.values.len()];
    let in_sample = ch * h * w;
    let out_per = ch * oh * ow;
    for b in 0..batch {
        for c in 0..ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = b * in_sample + c * h * w;
                    let mut best_idx = base + (2 * oy) * w + 2 * ox;
                    let mut best = input.values[best_idx];
                    for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if input.values[idx] > best {
                            best = input.values[idx];
                            best_idx = idx;
                        }
                    }
                    let out_idx = b * out_per + c * oh * ow + oy * ow + ox;
                    out.values[out_idx] = best;
                    argmax[out_idx] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}

fn softmax_forward<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    let k = input.sample_len();
    let mut values = vec![S::zero(); input.values.len()];
    for b in 0..input.batch() {
        let row = &input.values[b * k..(b + 1) * k];
        let max = row.iter().fold(S::neg_infinity(), |m, &v| if v > m { v } else { m });
        let mut sum = S::zero();
        for (i, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            values[b * k + i] = e;
            sum += e;
        }
        for v in &mut values[b * k..(b + 1) * k] {
            *v /= sum;
        }
    }
    Tensor { shape: input.shape.clone(), values }
}
