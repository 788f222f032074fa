use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::tensor::{Shape5, Tensor5};
use crate::Real;

/// Transfer function applied after bias.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Activation {
    #[default]
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, v: T) -> T {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(T::zero()),
        }
    }
}

/// Weights of one convolutional layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerParams<T> {
    /// Shape `(f′, f, kx, ky, kz)`.
    kernels: Tensor5<T>,
    bias: Vec<T>,
    activation: Activation,
}

impl<T: Real> ConvLayerParams<T> {
    pub fn new(kernels: Tensor5<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if bias.len() != kernels.shape().s {
            return Err(invalid!(
                "{} biases for {} output features",
                bias.len(),
                kernels.shape().s
            ));
        }
        if kernels.has_nan() || bias.iter().any(|b| b.is_nan()) {
            return Err(invalid!("layer weights contain NaN"));
        }
        Ok(ConvLayerParams {
            kernels,
            bias,
            activation,
        })
    }

    /// Fills kernels and biases from `gen` in storage order.
    pub fn from_fn(
        outputs: usize,
        inputs: usize,
        kernel: [usize; 3],
        activation: Activation,
        mut gen: impl FnMut() -> T,
    ) -> Result<Self> {
        let shape = Shape5::new(outputs, inputs, kernel[0], kernel[1], kernel[2])?;
        let kernels = Tensor5::from_fn(shape, |_| gen());
        let bias = (0..outputs).map(|_| gen()).collect();
        Self::new(kernels, bias, activation)
    }

    pub fn kernels(&self) -> &Tensor5<T> {
        &self.kernels
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn outputs(&self) -> usize {
        self.kernels.shape().s
    }

    pub fn inputs(&self) -> usize {
        self.kernels.shape().f
    }

    pub fn kernel_extent(&self) -> [usize; 3] {
        self.kernels.shape().spatial()
    }

    /// Kernel from input image `input` to output image `output`.
    pub fn kernel(&self, output: usize, input: usize) -> &[T] {
        self.kernels.image(output, input)
    }

    /// All `f` kernels feeding output image `output`, contiguous.
    pub fn kernels_for(&self, output: usize) -> &[T] {
        self.kernels.batch_entry(output)
    }

    pub fn cast<U: Real>(&self) -> ConvLayerParams<U> {
        ConvLayerParams {
            kernels: self.kernels.cast(),
            bias: self.bias.iter().map(|b| U::from_f64(b.as_f64())).collect(),
            activation: self.activation,
        }
    }

    /// Checks `input` against this layer and returns the output shape.
    pub fn output_shape(&self, input: Shape5) -> Result<Shape5> {
        if input.f != self.inputs() {
            return Err(invalid!(
                "layer expects {} input features, got {}",
                self.inputs(),
                input.f
            ));
        }
        let k = self.kernel_extent();
        let n = input.spatial();
        if (0..3).any(|a| k[a] > n[a]) {
            return Err(invalid!("kernel {k:?} larger than image {n:?}"));
        }
        Shape5::from_spatial(input.s, self.outputs(), [0, 1, 2].map(|a| n[a] - k[a] + 1))
    }

    /// Bias and transfer function over one output image.
    pub(crate) fn finish(&self, output: usize, img: &mut [T]) {
        let b = self.bias[output];
        let act = self.activation;
        img.iter_mut().for_each(|v| *v = act.apply(*v + b));
    }
}

/// How a pooling layer treats window offsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PoolMode {
    /// Non-overlapping blocks; extents must be divisible by the window.
    Plain,
    /// Max-pooling fragments: one plain pooling per window offset.
    Fragments,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PoolParams {
    pub window: [usize; 3],
    pub mode: PoolMode,
}

impl PoolParams {
    pub fn new(window: [usize; 3], mode: PoolMode) -> Result<Self> {
        if window.contains(&0) {
            return Err(invalid!("pooling window {window:?} has a zero extent"));
        }
        Ok(PoolParams { window, mode })
    }

    /// Window volume `px·py·pz`.
    pub fn volume(&self) -> usize {
        self.window.iter().product()
    }

    pub fn output_shape(&self, input: Shape5) -> Result<Shape5> {
        let n = input.spatial();
        let p = self.window;
        match self.mode {
            PoolMode::Plain => {
                if let Some(a) = (0..3).find(|&a| !n[a].is_multiple_of(p[a])) {
                    return Err(invalid!(
                        "extent {} not divisible by window {} on axis {a}",
                        n[a],
                        p[a]
                    ));
                }
                Shape5::from_spatial(input.s, input.f, [0, 1, 2].map(|a| n[a] / p[a]))
            }
            PoolMode::Fragments => {
                if let Some(a) = (0..3).find(|&a| !(n[a] + 1).is_multiple_of(p[a])) {
                    return Err(invalid!(
                        "extent {} + 1 not divisible by window {} on axis {a}",
                        n[a],
                        p[a]
                    ));
                }
                let m = [0, 1, 2].map(|a| n[a] / p[a]);
                if m.contains(&0) {
                    return Err(invalid!("window {p:?} leaves no output for extent {n:?}"));
                }
                let s = input
                    .s
                    .checked_mul(self.volume())
                    .ok_or_else(|| invalid!("fragment batch overflows"))?;
                Shape5::from_spatial(s, input.f, m)
            }
        }
    }
}
