//! Binary weight files.
//!
//! Little endian: the magic `SWW1`, a `u32` layer count, then per conv layer
//! five `u32`s `(outputs, inputs, kx, ky, kz)` followed by the kernels
//! (`outputs·inputs·kx·ky·kz` `f64`s, row-major) and `outputs` `f64` biases.
//! Activations come from the network description.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swconv_core::layers::ConvLayerParams;
use swconv_core::network::{LayerSpec, NetworkSpec, Weights};
use swconv_core::{Shape5, Tensor5};

const MAGIC: &[u8; 4] = b"SWW1";

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a weight file (bad magic)")]
    Magic,
    #[error("weights do not fit the network: {0}")]
    Mismatch(#[from] swconv_core::Error),
}

/// Uniform weights in `[-r, r]` with `r = 1/sqrt(fan-in)`, from `seed`.
pub fn random_weights(net: &NetworkSpec, seed: u64) -> Weights<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = net.feature_chain();
    let layers = net
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match *l {
            LayerSpec::Conv {
                features,
                kernel,
                activation,
            } => {
                let fan_in = (chain[i] * kernel.iter().product::<usize>()) as f64;
                let r = 1.0 / fan_in.sqrt();
                Some(ConvLayerParams::from_fn(features, chain[i], kernel, activation, || rng.gen_range(-r..=r)).unwrap())
            }
            LayerSpec::Pool { .. } => None,
        })
        .collect();
    Weights { layers }
}

pub fn write_weights(w: &Weights<f64>, mut out: impl Write) -> io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(w.layers.len() as u32).to_le_bytes())?;
    for l in &w.layers {
        let k = l.kernel_extent();
        for d in [l.outputs(), l.inputs(), k[0], k[1], k[2]] {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in l.kernels().data().iter().chain(l.bias()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn u32_of(r: &mut impl Read) -> io::Result<usize> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn f64s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut bytes = vec![0; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Reads a weight file and checks it against `net`.
pub fn read_weights(net: &NetworkSpec, mut input: impl Read) -> Result<Weights<f64>, WeightsError> {
    let mut magic = [0; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(WeightsError::Magic);
    }
    let convs = net.conv_layers();
    let n = u32_of(&mut input)?;
    if n != convs.len() {
        return Err(swconv_core::Error::InvalidArgument(format!("{n} weight layers for {} conv layers", convs.len())).into());
    }
    let mut layers = Vec::with_capacity(n);
    for &i in &convs {
        let dims: Vec<usize> = (0..5).map(|_| u32_of(&mut input)).collect::<io::Result<_>>()?;
        let shape = Shape5::new(dims[0], dims[1], dims[2], dims[3], dims[4])?;
        let kernels = Tensor5::from_vec(shape, f64s(&mut input, shape.len())?)?;
        let bias = f64s(&mut input, dims[0])?;
        let LayerSpec::Conv { activation, .. } = net.layers[i] else { unreachable!() };
        layers.push(ConvLayerParams::new(kernels, bias, activation)?);
    }
    let w = Weights { layers };
    w.check(net)?;
    Ok(w)
}
