//! Shape chains and input-shape enumeration.

use alloc::vec::Vec;

use crate::cost::field_of_view;
use crate::error::{Infeasibility, Rule};
use crate::layers::PoolMode;
use crate::network::{LayerSpec, NetworkSpec};
use crate::Shape5;

/// Shapes entering each layer plus the network output, or the first
/// violated rule.
pub fn propagate_shapes(
    net: &NetworkSpec,
    input: Shape5,
    modes: &[PoolMode],
) -> core::result::Result<Vec<Shape5>, Infeasibility> {
    let pools = net.pool_layers().len();
    if modes.len() != pools {
        return Err(Infeasibility::global(Rule::PoolModeCount {
            expected: pools,
            found: modes.len(),
        }));
    }
    if input.f != net.input_features {
        return Err(Infeasibility::at(
            0,
            Rule::FeatureMismatch {
                expected: net.input_features,
                found: input.f,
            },
        ));
    }
    let mut shapes = Vec::with_capacity(net.len() + 1);
    let mut cur = input;
    let mut mode = modes.iter();
    shapes.push(cur);
    for (i, l) in net.layers.iter().enumerate() {
        let n = cur.spatial();
        let (s, f, m) = match *l {
            LayerSpec::Conv { features, kernel, .. } => {
                if (0..3).any(|a| kernel[a] > n[a]) {
                    return Err(Infeasibility::at(i, Rule::KernelExceedsExtent { kernel, extent: n }));
                }
                (cur.s, features, [0, 1, 2].map(|a| n[a] - kernel[a] + 1))
            }
            LayerSpec::Pool { window, .. } => match mode.next().unwrap() {
                PoolMode::Plain => {
                    if (0..3).any(|a| !n[a].is_multiple_of(window[a])) {
                        return Err(Infeasibility::at(i, Rule::PoolDivisibility { extent: n, window }));
                    }
                    (cur.s, cur.f, [0, 1, 2].map(|a| n[a] / window[a]))
                }
                PoolMode::Fragments => {
                    if (0..3).any(|a| !(n[a] + 1).is_multiple_of(window[a]) || n[a] < window[a]) {
                        return Err(Infeasibility::at(i, Rule::FragmentDivisibility { extent: n, window }));
                    }
                    let volume: usize = window.iter().product();
                    (cur.s * volume, cur.f, [0, 1, 2].map(|a| n[a] / window[a]))
                }
            },
        };
        cur = Shape5::from_spatial(s, f, m).expect("rules above keep every extent positive");
        shapes.push(cur);
    }
    Ok(shapes)
}

/// Windows of the fragment-mode pooling layers, in network order.
pub fn fragment_windows(net: &NetworkSpec, modes: &[PoolMode]) -> Vec<[usize; 3]> {
    net.pool_layers()
        .iter()
        .zip(modes)
        .filter(|(_, m)| **m == PoolMode::Fragments)
        .map(|(&i, _)| match net.layers[i] {
            LayerSpec::Pool { window, .. } => window,
            LayerSpec::Conv { .. } => unreachable!(),
        })
        .collect()
}

/// Which input extents to try.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShapeSearch {
    /// Largest extent per axis.
    pub max_extent: usize,
    pub batch: usize,
    /// `None`: cubes only. `Some(step)`: every `(x, y, z)` on a grid of
    /// this step starting at the field of view.
    pub anisotropic_step: Option<usize>,
}

impl ShapeSearch {
    pub fn cubes(max_extent: usize) -> Self {
        ShapeSearch {
            max_extent,
            batch: 1,
            anisotropic_step: None,
        }
    }

    pub fn with_batch(self, batch: usize) -> Self {
        ShapeSearch { batch, ..self }
    }

    /// Every candidate input shape, smallest first, before any feasibility test.
    pub fn candidates(&self, net: &NetworkSpec) -> Vec<Shape5> {
        let fov = field_of_view(net);
        let f = net.input_features;
        let mut out = Vec::new();
        if self.batch == 0 {
            return out;
        }
        match self.anisotropic_step {
            None => {
                let lo = fov.iter().copied().max().unwrap();
                for n in lo..=self.max_extent {
                    out.push(Shape5::cube(self.batch, f, n).unwrap());
                }
            }
            Some(step) => {
                let step = step.max(1);
                let axis = |a: usize| (fov[a]..=self.max_extent).step_by(step).collect::<Vec<_>>();
                for &x in &axis(0) {
                    for &y in &axis(1) {
                        for &z in &axis(2) {
                            out.push(Shape5::new(self.batch, f, x, y, z).unwrap());
                        }
                    }
                }
            }
        }
        out
    }
}
