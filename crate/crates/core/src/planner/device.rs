//! Splitting a conv layer into sub-layers that fit device memory.

use alloc::vec::Vec;
use core::ops::Range;

use super::search::conv_cost;
use super::{compute_seconds, Block, DeviceModel};
use crate::cost::{LayerDims, MemoryDims, PrimitiveKind};
use crate::error::{Infeasibility, Rule};

/// One conv layer instance: batch, input maps, output maps, extents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvInstance {
    pub s: usize,
    pub f: usize,
    pub f_out: usize,
    pub n: [usize; 3],
    pub k: [usize; 3],
}

impl ConvInstance {
    fn input_len(&self) -> usize {
        self.n.iter().product()
    }

    fn output_len(&self) -> usize {
        (0..3).map(|a| self.n[a] + 1 - self.k[a]).product()
    }

    /// Device kinds considered: direct for kernels up to 5³, FFT beyond.
    pub fn device_kinds(&self) -> &'static [PrimitiveKind] {
        if self.k.iter().all(|&k| k <= 5) {
            &[PrimitiveKind::DeviceDirectDefault, PrimitiveKind::DeviceDirectPrecomp]
        } else {
            &[PrimitiveKind::DeviceFft]
        }
    }
}

/// Modeled `(compute seconds, transfer seconds, device memory)` of one
/// `(S_i, f_i, f′_i)` sub-layer.
pub(crate) fn block_cost(
    kind: PrimitiveKind,
    layer: &ConvInstance,
    (s, f, fo): (usize, usize, usize),
    device: &DeviceModel,
) -> (f64, f64, f64) {
    let (n, n_out) = (layer.input_len(), layer.output_len());
    let ld = LayerDims {
        s,
        f,
        f_out: fo,
        n: layer.n,
        k: layer.k,
    };
    let md = MemoryDims {
        s: s as f64,
        f: f as f64,
        f_out: fo as f64,
        n: n as f64,
        n_out: n_out as f64,
        nt: 0.0,
    };
    let (flops, memory) = conv_cost(kind, &ld, &md, &device.profile, device.constants.c, &device.env);
    let moved = (s * f * n + s * fo * n_out) as f64;
    (compute_seconds(flops, kind, &device.constants), device.transfer_seconds(moved), memory)
}

/// A decomposed layer with its modeled cost.
#[derive(Clone, Debug, PartialEq)]
pub struct SubLayerPlan {
    pub kind: PrimitiveKind,
    pub blocks: Vec<Block>,
    pub compute_seconds: f64,
    pub transfer_seconds: f64,
    /// Largest block footprint on the device.
    pub memory: f64,
}

impl SubLayerPlan {
    pub fn seconds(&self) -> f64 {
        self.compute_seconds + self.transfer_seconds
    }
}

fn chunks(total: usize, size: usize) -> impl Iterator<Item = Range<usize>> {
    (0..total.div_ceil(size)).map(move |c| c * size..((c + 1) * size).min(total))
}

/// `(full, remainder)` piece sizes and counts of splitting `total` by `size`.
fn pieces(total: usize, size: usize) -> [(usize, usize); 2] {
    [(size, total / size), (total % size, usize::from(!total.is_multiple_of(size)))]
}

struct Choice {
    s: usize,
    f: usize,
    fo: usize,
    compute: f64,
    transfer: f64,
    memory: f64,
}

fn evaluate(kind: PrimitiveKind, layer: &ConvInstance, s: usize, fa: usize, foa: usize, device: &DeviceModel) -> Choice {
    let (mut compute, mut transfer, mut memory) = (0.0, 0.0, 0.0f64);
    for (bs, nb) in pieces(layer.s, s) {
        for (bf, nf) in pieces(layer.f, fa) {
            for (bo, no) in pieces(layer.f_out, foa) {
                let count = nb * nf * no;
                if count == 0 {
                    continue;
                }
                let (c, t, m) = block_cost(kind, layer, (bs, bf, bo), device);
                compute += count as f64 * c;
                transfer += count as f64 * t;
                memory = memory.max(m);
            }
        }
    }
    Choice {
        s,
        f: fa,
        fo: foa,
        compute,
        transfer,
        memory,
    }
}

fn fits(kind: PrimitiveKind, layer: &ConvInstance, dims: (usize, usize, usize), device: &DeviceModel) -> bool {
    block_cost(kind, layer, dims, device).2 <= device.env.capacity as f64
}

fn better(a: &Choice, b: &Choice) -> bool {
    let (ta, tb) = (a.compute + a.transfer, b.compute + b.transfer);
    ta < tb || (ta == tb && a.memory < b.memory)
}

/// Pieces of `layer` that each fit the device, and the modeled time of
/// running them one after another with their inputs uploaded and outputs
/// downloaded.
///
/// A layer that fits runs whole. Otherwise, with a batch, the largest
/// sub-batch of whole layers that fits is used; failing that, single batch
/// entries are split into uniform input/output feature blocks (plus
/// remainder blocks), choosing the block size with the least modeled time.
pub fn sublayer_decompose(layer: &ConvInstance, device: &DeviceModel) -> Result<SubLayerPlan, Infeasibility> {
    let mut best: Option<(PrimitiveKind, Choice)> = None;
    for &kind in layer.device_kinds() {
        let whole = (layer.s, layer.f, layer.f_out);
        let choice = if fits(kind, layer, whole, device) {
            Some(evaluate(kind, layer, layer.s, layer.f, layer.f_out, device))
        } else if let Some(s) = (1..layer.s).rev().find(|&s| fits(kind, layer, (s, layer.f, layer.f_out), device)) {
            Some(evaluate(kind, layer, s, layer.f, layer.f_out, device))
        } else {
            let mut pick: Option<Choice> = None;
            for fa in 1..=layer.f {
                for foa in 1..=layer.f_out {
                    if !fits(kind, layer, (1, fa, foa), device) {
                        break;
                    }
                    let c = evaluate(kind, layer, 1, fa, foa, device);
                    if pick.as_ref().is_none_or(|p| better(&c, p)) {
                        pick = Some(c);
                    }
                }
            }
            pick
        };
        if let Some(c) = choice {
            if best.as_ref().is_none_or(|(_, b)| better(&c, b)) {
                best = Some((kind, c));
            }
        }
    }
    let (kind, c) = best.ok_or(Infeasibility::global(Rule::NoSubLayerFits))?;
    let mut blocks = Vec::new();
    for batch in chunks(layer.s, c.s) {
        for outputs in chunks(layer.f_out, c.fo) {
            for inputs in chunks(layer.f, c.f) {
                blocks.push(Block {
                    batch: batch.clone(),
                    inputs,
                    outputs: outputs.clone(),
                });
            }
        }
    }
    Ok(SubLayerPlan {
        kind,
        blocks,
        compute_seconds: c.compute,
        transfer_seconds: c.transfer,
        memory: c.memory,
    })
}
