#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swconv_core::layers::{Activation, ConvLayerParams};
use swconv_core::{Shape5, Tensor5};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape5) -> Tensor5<f64> {
    Tensor5::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

pub fn random_params(
    rng: &mut ChaCha8Rng,
    outputs: usize,
    inputs: usize,
    k: [usize; 3],
    act: Activation,
) -> ConvLayerParams<f64> {
    ConvLayerParams::from_fn(outputs, inputs, k, act, || rng.gen_range(-1.0..1.0)).unwrap()
}

pub fn rel(a: &Tensor5<f64>, b: &Tensor5<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    swconv_core::tensor::max_relative_error(a.data(), b.data())
}
