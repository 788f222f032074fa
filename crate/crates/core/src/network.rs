//! Network architecture descriptions and weights.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::layers::{Activation, ConvLayerParams, PoolMode};
use crate::Real;

/// Requested treatment of a pooling layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PoolChoice {
    /// Left to the planner.
    #[default]
    Auto,
    Fragments,
    Plain,
}

impl PoolChoice {
    /// Modes the planner may pick from.
    pub fn candidates(self) -> &'static [PoolMode] {
        match self {
            PoolChoice::Auto => &[PoolMode::Fragments, PoolMode::Plain],
            PoolChoice::Fragments => &[PoolMode::Fragments],
            PoolChoice::Plain => &[PoolMode::Plain],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv {
        features: usize,
        kernel: [usize; 3],
        activation: Activation,
    },
    Pool {
        window: [usize; 3],
        choice: PoolChoice,
    },
}

impl LayerSpec {
    pub fn conv(features: usize, k: usize, activation: Activation) -> Self {
        LayerSpec::Conv {
            features,
            kernel: [k; 3],
            activation,
        }
    }

    pub fn pool(p: usize) -> Self {
        LayerSpec::Pool {
            window: [p; 3],
            choice: PoolChoice::Auto,
        }
    }

    pub fn is_pool(&self) -> bool {
        matches!(self, LayerSpec::Pool { .. })
    }
}

/// An ordered stack of convolution and pooling layers.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub input_features: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_features: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_features == 0 {
            return Err(invalid!("input feature count must be >= 1"));
        }
        if layers.is_empty() {
            return Err(invalid!("network has no layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            let ok = match l {
                LayerSpec::Conv { features, kernel, .. } => *features > 0 && !kernel.contains(&0),
                LayerSpec::Pool { window, .. } => !window.contains(&0),
            };
            if !ok {
                return Err(invalid!("layer {i} has a zero extent or feature count"));
            }
        }
        Ok(NetworkSpec {
            input_features,
            layers,
        })
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Feature count entering each layer, plus the output count at the end.
    pub fn feature_chain(&self) -> Vec<usize> {
        let mut f = self.input_features;
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        out.push(f);
        for l in &self.layers {
            if let LayerSpec::Conv { features, .. } = l {
                f = *features;
            }
            out.push(f);
        }
        out
    }

    pub fn output_features(&self) -> usize {
        *self.feature_chain().last().unwrap()
    }

    pub fn pool_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layers[i].is_pool()).collect()
    }

    pub fn conv_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| !self.layers[i].is_pool()).collect()
    }

    /// Every pool mode assignment allowed by the layers' choices, in a fixed order.
    pub fn pool_mode_assignments(&self) -> Vec<Vec<PoolMode>> {
        let mut out = alloc::vec![Vec::new()];
        for &i in &self.pool_layers() {
            let LayerSpec::Pool { choice, .. } = self.layers[i] else { unreachable!() };
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    choice.candidates().iter().map(move |&m| {
                        let mut v = prefix.clone();
                        v.push(m);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

/// Weights for every conv layer of a network, in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T> {
    pub layers: Vec<ConvLayerParams<T>>,
}

impl<T: Real> Weights<T> {
    /// Draws every kernel and bias from `gen`, layer by layer.
    pub fn from_fn(net: &NetworkSpec, mut gen: impl FnMut() -> T) -> Result<Self> {
        let chain = net.feature_chain();
        let mut layers = Vec::new();
        for (i, l) in net.layers.iter().enumerate() {
            if let LayerSpec::Conv {
                features,
                kernel,
                activation,
            } = *l
            {
                layers.push(ConvLayerParams::from_fn(features, chain[i], kernel, activation, &mut gen)?);
            }
        }
        Ok(Weights { layers })
    }

    /// Checks that the weights fit `net`.
    pub fn check(&self, net: &NetworkSpec) -> Result<()> {
        let chain = net.feature_chain();
        let convs = net.conv_layers();
        if convs.len() != self.layers.len() {
            return Err(invalid!("{} weight layers for {} conv layers", self.layers.len(), convs.len()));
        }
        for (w, &i) in self.layers.iter().zip(&convs) {
            let LayerSpec::Conv { features, kernel, .. } = net.layers[i] else { unreachable!() };
            if w.outputs() != features || w.inputs() != chain[i] || w.kernel_extent() != kernel {
                return Err(invalid!("weights for layer {i} do not match its shape"));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Weights<U> {
        Weights {
            layers: self.layers.iter().map(|l| l.cast()).collect(),
        }
    }
}
