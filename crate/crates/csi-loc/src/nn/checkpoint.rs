//! Network checkpoint serialization.
//!
//! Layout: magic "NNM1" | u16 version=1 | u8 input rank | rank x u32 dims |
//! u32 layer count | layer descriptors | parameters. Descriptors are a u8
//! kind tag plus kind-specific fields; parameters follow in layer order,
//! weights before bias, as little-endian f64. All integers little-endian.

use crate::byteio::{write_f64, write_u16, write_u32, CountingReader};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::io::{Read, Write};
use std::path::Path;

use super::layer::{Affine, Conv2d, Layer};
use super::network::Network;

const NETWORK_MAGIC: &[u8; 4] = b"NNM1";
const NETWORK_VERSION: u16 = 1;

const TAG_FULLY_CONNECTED: u8 = 0;
const TAG_CONV2D: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_MAX_POOL2: u8 = 3;
const TAG_DROPOUT: u8 = 4;
const TAG_LINEAR_OUTPUT: u8 = 5;
const TAG_SOFTMAX_OUTPUT: u8 = 6;

/// Writes the network block to `w`.
pub fn write_network<S: Scalar, W: Write>(network: &Network<S>, w: &mut W) -> Result<()> {
    w.write_all(NETWORK_MAGIC)?;
    write_u16(w, NETWORK_VERSION)?;
    w.write_all(&[network.input_shape.len() as u8])?;
    for &d in &network.input_shape {
        write_u32(w, d as u32)?;
    }
    write_u32(w, network.layers.len() as u32)?;
    for layer in &network.layers {
        match layer {
            Layer::FullyConnected(a) => {
                w.write_all(&[TAG_FULLY_CONNECTED])?;
                write_u32(w, a.fan_in as u32)?;
                write_u32(w, a.fan_out as u32)?;
            }
            Layer::LinearOutput(a) => {
                w.write_all(&[TAG_LINEAR_OUTPUT])?;
                write_u32(w, a.fan_in as u32)?;
                write_u32(w, a.fan_out as u32)?;
            }
            Layer::Conv2d(c) => {
                w.write_all(&[TAG_CONV2D])?;
                write_u32(w, c.in_channels as u32)?;
                write_u32(w, c.out_channels as u32)?;
                write_u32(w, c.kernel_h as u32)?;
                write_u32(w, c.kernel_w as u32)?;
            }
            Layer::Relu => w.write_all(&[TAG_RELU])?,
            Layer::MaxPool2 => w.write_all(&[TAG_MAX_POOL2])?,
            Layer::Dropout { rate } => {
                w.write_all(&[TAG_DROPOUT])?;
                write_f64(w, *rate)?;
            }
            Layer::SoftmaxOutput => w.write_all(&[TAG_SOFTMAX_OUTPUT])?,
        }
    }
    for layer in &network.layers {
        match layer {
            Layer::FullyConnected(a) | Layer::LinearOutput(a) => {
                for &v in a.weights.iter().chain(a.bias.iter()) {
                    write_f64(w, v.into_f64())?;
                }
            }
            Layer::Conv2d(c) => {
                for &v in c.weights.iter().chain(c.bias.iter()) {
                    write_f64(w, v.into_f64())?;
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Reads a network block from `r` (already positioned at the magic).
pub(crate) fn read_network_from<S: Scalar, R: Read>(r: &mut CountingReader<R>) -> Result<Network<S>> {
    let at = r.offset;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "network magic")?;
    if &magic != NETWORK_MAGIC {
        return Err(Error::parse(at, format!("bad magic {magic:?}, expected \"NNM1\"")));
    }
    let at = r.offset;
    let version = r.u16("network version")?;
    if version != NETWORK_VERSION {
        return Err(Error::parse(at, format!("unsupported network version {version}")));
    }
    let rank = r.u8("input rank")? as usize;
    let mut input_shape = Vec::with_capacity(rank);
    for k in 0..rank {
        input_shape.push(r.u32(&format!("input dim {k}"))? as usize);
    }
    let n_layers = r.u32("layer count")? as usize;
    let mut layers: Vec<Layer<S>> = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let at = r.offset;
        let tag = r.u8(&format!("layer {k} tag"))?;
        let layer = match tag {
            TAG_FULLY_CONNECTED | TAG_LINEAR_OUTPUT => {
                let fan_in = r.u32(&format!("layer {k} fan_in"))? as usize;
                let fan_out = r.u32(&format!("layer {k} fan_out"))? as usize;
                let affine = Affine::zeros(fan_in, fan_out);
                if tag == TAG_FULLY_CONNECTED {
                    Layer::FullyConnected(affine)
                } else {
                    Layer::LinearOutput(affine)
                }
            }
            TAG_CONV2D => {
                let in_ch = r.u32(&format!("layer {k} in_channels"))? as usize;
                let out_ch = r.u32(&format!("layer {k} out_channels"))? as usize;
                let kh = r.u32(&format!("layer {k} kernel_h"))? as usize;
                let kw = r.u32(&format!("layer {k} kernel_w"))? as usize;
                Layer::Conv2d(Conv2d::zeros(in_ch, out_ch, kh, kw))
            }
            TAG_RELU => Layer::Relu,
            TAG_MAX_POOL2 => Layer::MaxPool2,
            TAG_DROPOUT => Layer::Dropout { rate: r.f64(&format!("layer {k} dropout rate"))? },
            TAG_SOFTMAX_OUTPUT => Layer::SoftmaxOutput,
            other => return Err(Error::parse(at, format!("unknown layer tag {other}"))),
        };
        layers.push(layer);
    }
    for (k, layer) in layers.iter_mut().enumerate() {
        match layer {
            Layer::FullyConnected(a) | Layer::LinearOutput(a) => {
                for (j, v) in a.weights.iter_mut().chain(a.bias.iter_mut()).enumerate() {
                    *v = S::from_f64_lossy(r.f64(&format!("layer {k} parameter {j}"))?);
                }
            }
            Layer::Conv2d(c) => {
                for (j, v) in c.weights.iter_mut().chain(c.bias.iter_mut()).enumerate() {
                    *v = S::from_f64_lossy(r.f64(&format!("layer {k} parameter {j}"))?);
                }
            }
            _ => {}
        }
    }
    Network::new(input_shape, layers)
}

pub fn save_network<S: Scalar>(network: &Network<S>, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_network(network, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_network<S: Scalar>(path: &Path) -> Result<Network<S>> {
    let mut r = CountingReader::new(std::io::BufReader::new(std::fs::File::open(path)?));
    read_network_from(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_net() -> Network<f64> {
        let mut net = Network::new(
            vec![3, 4, 4],
            vec![
                Layer::Conv2d(Conv2d::zeros(3, 2, 3, 3)),
                Layer::Relu,
                Layer::MaxPool2,
                Layer::FullyConnected(Affine::zeros(2 * 2 * 2, 5)),
                Layer::Relu,
                Layer::Dropout { rate: 0.3 },
                Layer::LinearOutput(Affine::zeros(5, 2)),
                Layer::SoftmaxOutput,
            ],
        )
        .unwrap();
        net.initialize(21);
        net
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.nnm");
        let net = sample_net();
        save_network(&net, &path).unwrap();
        let back: Network<f64> = load_network(&path).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn checkpoint_bytes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.nnm");
        let p2 = dir.path().join("b.nnm");
        let net = sample_net();
        save_network(&net, &p1).unwrap();
        let back: Network<f64> = load_network(&p1).unwrap();
        save_network(&back, &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn truncation_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.nnm");
        let net = sample_net();
        save_network(&net, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        match load_network::<f64>(&path) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
