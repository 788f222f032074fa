//! Closed-form FLOP and memory models, theoretical speedup and field of view.
//!
//! Memory is counted in real-scalar equivalents; the transformed-image size
//! `ñ` is therefore twice the number of complex elements in a half-spectrum.
//! Logarithms are natural.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::real::ln;
use crate::fft::{optimal_fft_shape, pruned_fft_flops_3d, RadixProfile};
use crate::layers::{PoolMode, PoolParams};
use crate::network::{LayerSpec, NetworkSpec};
use crate::tensor::Shape5;

/// Default FFT cost constant `C`.
pub const DEFAULT_FFT_CONSTANT: f64 = 2.5;

/// Rates and the FFT constant for one resource domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostConstants {
    /// Operations per point per log-point of an FFT.
    pub c: f64,
    /// Operations per second.
    pub flop_rate: f64,
    /// Real scalars per second between host and device.
    pub transfer_rate: f64,
}

impl CostConstants {
    pub fn new(c: f64, flop_rate: f64, transfer_rate: f64) -> Result<Self> {
        if !(c > 0.0 && flop_rate > 0.0 && transfer_rate > 0.0) {
            return Err(invalid!("cost constants must be strictly positive"));
        }
        Ok(CostConstants {
            c,
            flop_rate,
            transfer_rate,
        })
    }
}

/// Workers, memory capacity and transform scratch constant of one domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ResourceEnv {
    /// `T`: worker count.
    pub workers: usize,
    /// Real-scalar equivalents.
    pub capacity: usize,
    /// `K`: memory reserved for 1D transform overhead by the staged algorithms.
    pub overhead_cap: usize,
}

impl ResourceEnv {
    pub fn new(workers: usize, capacity: usize, overhead_cap: usize) -> Result<Self> {
        if workers == 0 || capacity == 0 {
            return Err(invalid!("resource env needs workers >= 1 and capacity > 0"));
        }
        Ok(ResourceEnv {
            workers,
            capacity,
            overhead_cap,
        })
    }
}

/// Every layer implementation the models know about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimitiveKind {
    DirectNaive,
    DirectTemp,
    FftDataParallel,
    FftTaskParallel,
    FftStaged,
    DeviceDirectDefault,
    DeviceDirectPrecomp,
    DeviceFft,
    PoolPlain,
    PoolFragments,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 10] = [
        PrimitiveKind::DirectNaive,
        PrimitiveKind::DirectTemp,
        PrimitiveKind::FftDataParallel,
        PrimitiveKind::FftTaskParallel,
        PrimitiveKind::FftStaged,
        PrimitiveKind::DeviceDirectDefault,
        PrimitiveKind::DeviceDirectPrecomp,
        PrimitiveKind::DeviceFft,
        PrimitiveKind::PoolPlain,
        PrimitiveKind::PoolFragments,
    ];

    /// Convolution kinds that run on the host.
    pub const HOST_CONV: [PrimitiveKind; 5] = [
        PrimitiveKind::DirectNaive,
        PrimitiveKind::DirectTemp,
        PrimitiveKind::FftDataParallel,
        PrimitiveKind::FftTaskParallel,
        PrimitiveKind::FftStaged,
    ];

    /// Convolution kinds that run on the device.
    pub const DEVICE_CONV: [PrimitiveKind; 3] = [
        PrimitiveKind::DeviceDirectDefault,
        PrimitiveKind::DeviceDirectPrecomp,
        PrimitiveKind::DeviceFft,
    ];

    pub fn is_pool(self) -> bool {
        matches!(self, PrimitiveKind::PoolPlain | PrimitiveKind::PoolFragments)
    }

    pub fn is_device(self) -> bool {
        Self::DEVICE_CONV.contains(&self)
    }

    pub fn is_fft(self) -> bool {
        matches!(
            self,
            PrimitiveKind::FftDataParallel
                | PrimitiveKind::FftTaskParallel
                | PrimitiveKind::FftStaged
                | PrimitiveKind::DeviceFft
        )
    }

    /// Spectra laid out `(b, z″, y′, x′)` rather than `(x″, y′, z′)`.
    pub fn batched_layout(self) -> bool {
        matches!(self, PrimitiveKind::FftStaged | PrimitiveKind::DeviceFft)
    }

    /// Relative speed at equal FLOPs: the temp-buffer direct convolution is
    /// modeled 2× faster than the naive one, and the index-precomputing device
    /// convolution 3× faster than the default one.
    pub fn speed_factor(self) -> f64 {
        match self {
            PrimitiveKind::DirectTemp => 2.0,
            PrimitiveKind::DeviceDirectPrecomp => 3.0,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::DirectNaive => "direct-naive",
            PrimitiveKind::DirectTemp => "direct-temp",
            PrimitiveKind::FftDataParallel => "fft-data-parallel",
            PrimitiveKind::FftTaskParallel => "fft-task-parallel",
            PrimitiveKind::FftStaged => "fft-staged",
            PrimitiveKind::DeviceDirectDefault => "device-direct-default",
            PrimitiveKind::DeviceDirectPrecomp => "device-direct-precomp",
            PrimitiveKind::DeviceFft => "device-fft",
            PrimitiveKind::PoolPlain => "pool-plain",
            PrimitiveKind::PoolFragments => "pool-fragments",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl core::fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape of one layer instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerDims {
    pub s: usize,
    pub f: usize,
    /// Output images per batch entry (for fragment pooling: `f·P`).
    pub f_out: usize,
    /// Input spatial extents.
    pub n: [usize; 3],
    /// Kernel or pooling window.
    pub k: [usize; 3],
}

impl LayerDims {
    pub fn cubic(s: usize, f: usize, f_out: usize, n: usize, k: usize) -> Self {
        LayerDims {
            s,
            f,
            f_out,
            n: [n; 3],
            k: [k; 3],
        }
    }

    pub fn input_len(&self) -> usize {
        self.n.iter().product()
    }

    /// Voxels of one output image: `n − k + 1` for convolutions.
    pub fn conv_output_len(&self) -> usize {
        (0..3).map(|a| self.n[a] + 1 - self.k[a]).product()
    }
}

/// Modeled operation count of one layer, for anisotropic shapes. For FFT kinds
/// `d.n` is the transform extent.
pub fn layer_flops(kind: PrimitiveKind, d: &LayerDims, c: f64) -> Result<f64> {
    if d.k.iter().zip(&d.n).any(|(k, n)| k > n || *k == 0) {
        return Err(invalid!("window {:?} does not fit extent {:?}", d.k, d.n));
    }
    let s = d.s as f64;
    let f = d.f as f64;
    let fo = d.f_out as f64;
    let v = d.input_len() as f64;
    let kv: f64 = d.k.iter().product::<usize>() as f64;
    Ok(match kind {
        PrimitiveKind::DirectNaive
        | PrimitiveKind::DirectTemp
        | PrimitiveKind::DeviceDirectDefault
        | PrimitiveKind::DeviceDirectPrecomp => s * fo * f * v * kv,
        PrimitiveKind::FftDataParallel
        | PrimitiveKind::FftTaskParallel
        | PrimitiveKind::FftStaged
        | PrimitiveKind::DeviceFft => {
            s * c * v * ln(v) * (fo + f) + 4.0 * s * fo * f * v + f * fo * pruned_fft_flops_3d(d.n, d.k, c)
        }
        PrimitiveKind::PoolPlain => s * f * v,
        PrimitiveKind::PoolFragments => s * f * v * kv,
    })
}

/// [`layer_flops`] for cubic extents.
pub fn layer_flops_cubic(kind: PrimitiveKind, s: usize, f: usize, f_out: usize, n: usize, k: usize, c: f64) -> Result<f64> {
    layer_flops(kind, &LayerDims::cubic(s, f, f_out, n, k), c)
}

/// Arguments of the per-primitive memory formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemoryDims {
    pub s: f64,
    pub f: f64,
    pub f_out: f64,
    /// Input image voxels.
    pub n: f64,
    /// Output image voxels.
    pub n_out: f64,
    /// Transformed image size in real scalars.
    pub nt: f64,
}

/// `ñ` in real scalars for `kind` on input extents `n` padded under `profile`:
/// `2·(x′/2+1)·y′·z′`, or `2·x′·y′·(z′/2+1)` for the batched layout.
pub fn transformed_len(kind: PrimitiveKind, n: [usize; 3], profile: &RadixProfile) -> usize {
    let [x, y, z] = optimal_fft_shape(n, profile);
    if kind.batched_layout() {
        2 * x * y * (z / 2 + 1)
    } else {
        2 * (x / 2 + 1) * y * z
    }
}

/// Modeled peak working set of one layer, in real scalars.
pub fn layer_memory(kind: PrimitiveKind, d: &MemoryDims, env: &ResourceEnv) -> f64 {
    let MemoryDims { s, f, f_out: fo, n, n_out, nt } = *d;
    let t = env.workers as f64;
    let k = env.overhead_cap as f64;
    match kind {
        PrimitiveKind::DirectNaive | PrimitiveKind::DeviceDirectDefault => s * f * n + s * fo * n_out,
        PrimitiveKind::DirectTemp => s * f * n + s * fo * n_out + t * n_out,
        PrimitiveKind::FftDataParallel => (s * f * (n + nt)).max(s * fo * n_out + (s * f + 1.0) * nt),
        PrimitiveKind::FftTaskParallel => (s * f * (n + nt))
            .max(s * (f + fo) * nt + t * nt)
            .max(s * fo * (n_out + nt)),
        PrimitiveKind::FftStaged | PrimitiveKind::DeviceFft => {
            k + (s * f * (n + nt) + f * nt)
                .max(s * (f + fo) * nt + 2.0 * f * nt)
                .max(s * fo * (n_out + nt) + fo * nt)
        }
        PrimitiveKind::DeviceDirectPrecomp => 2.0 * s * f * n + s * fo * n_out,
        PrimitiveKind::PoolPlain | PrimitiveKind::PoolFragments => s * f * n + s * fo * n_out,
    }
}

/// Working set of this crate's implementation of `kind`, where it differs
/// from [`layer_memory`]: the data-parallel algorithm keeps one accumulator
/// spectrum per batch entry, `S·f′·n′ + (S·f + S + 1)·ñ` in its second phase.
pub fn implementation_memory(kind: PrimitiveKind, d: &MemoryDims, env: &ResourceEnv) -> f64 {
    let model = layer_memory(kind, d, env);
    match kind {
        PrimitiveKind::FftDataParallel => {
            let MemoryDims { s, f, f_out: fo, n_out, nt, .. } = *d;
            model.max(s * fo * n_out + (s * f + s + 1.0) * nt)
        }
        _ => model,
    }
}

/// Input extent whose dense output is one voxel, by forward recursion:
/// a convolution adds `(k−1)·s`, a pooling layer adds `(p−1)·s` and then
/// multiplies the stride `s` by `p`.
pub fn field_of_view(net: &NetworkSpec) -> [usize; 3] {
    let mut fov = [1usize; 3];
    let mut stride = [1usize; 3];
    for l in &net.layers {
        match *l {
            LayerSpec::Conv { kernel, .. } => {
                for a in 0..3 {
                    fov[a] += (kernel[a] - 1) * stride[a];
                }
            }
            LayerSpec::Pool { window, .. } => {
                for a in 0..3 {
                    fov[a] += (window[a] - 1) * stride[a];
                    stride[a] *= window[a];
                }
            }
        }
    }
    fov
}

/// Shapes entering each layer plus the final output shape, or the first
/// violated rule.
pub fn layer_shapes(net: &NetworkSpec, input: Shape5, modes: &[PoolMode]) -> Result<Vec<Shape5>> {
    let pools = net.pool_layers().len();
    if modes.len() != pools {
        return Err(invalid!("{} pool modes for {pools} pooling layers", modes.len()));
    }
    if input.f != net.input_features {
        return Err(invalid!("input has {} features, network expects {}", input.f, net.input_features));
    }
    let mut shapes = Vec::with_capacity(net.len() + 1);
    let mut cur = input;
    let mut mode = modes.iter();
    shapes.push(cur);
    for (i, l) in net.layers.iter().enumerate() {
        cur = match *l {
            LayerSpec::Conv { features, kernel, .. } => {
                let n = cur.spatial();
                if (0..3).any(|a| kernel[a] > n[a]) {
                    return Err(invalid!("layer {i}: kernel {kernel:?} larger than extent {n:?}"));
                }
                Shape5::from_spatial(cur.s, features, [0, 1, 2].map(|a| n[a] - kernel[a] + 1))?
            }
            LayerSpec::Pool { window, .. } => PoolParams::new(window, *mode.next().unwrap())?
                .output_shape(cur)
                .map_err(|e| invalid!("layer {i}: {e}"))?,
        };
        shapes.push(cur);
    }
    Ok(shapes)
}

/// Which layer costs the speedup numerator uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SpeedupBaseline {
    /// FFT-based convolution at the field of view.
    #[default]
    Fft,
    /// Direct convolution at the field of view.
    Direct,
}

fn network_flops(net: &NetworkSpec, shapes: &[Shape5], modes: &[PoolMode], conv: PrimitiveKind, c: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut mode = modes.iter();
    for (i, l) in net.layers.iter().enumerate() {
        let sh = shapes[i];
        let out = shapes[i + 1];
        total += match *l {
            LayerSpec::Conv { kernel, .. } => layer_flops(
                conv,
                &LayerDims { s: sh.s, f: sh.f, f_out: out.f, n: sh.spatial(), k: kernel },
                c,
            )?,
            LayerSpec::Pool { window, .. } => {
                let kind = match mode.next().unwrap() {
                    PoolMode::Plain => PrimitiveKind::PoolPlain,
                    PoolMode::Fragments => PrimitiveKind::PoolFragments,
                };
                layer_flops(kind, &LayerDims { s: sh.s, f: sh.f, f_out: sh.f, n: sh.spatial(), k: window }, c)?
            }
        };
    }
    Ok(total)
}

/// Operations per output voxel of the naive run (input equal to the field of
/// view, one output voxel) divided by operations per dense output voxel of an
/// all-fragment run at cubic input extent `n` and batch `s`.
///
/// At `n` equal to the field of view fragment pooling is not admissible, so
/// both sides are evaluated with plain pooling and the result is exactly 1.
pub fn theoretical_speedup(net: &NetworkSpec, n: usize, s: usize, c: f64, baseline: SpeedupBaseline) -> Result<f64> {
    let fov = field_of_view(net);
    if fov[0] != fov[1] || fov[1] != fov[2] {
        return Err(invalid!("theoretical speedup needs a cubic field of view"));
    }
    let pools = net.pool_layers().len();
    let plain = alloc::vec![PoolMode::Plain; pools];
    let kind = match baseline {
        SpeedupBaseline::Fft => PrimitiveKind::FftDataParallel,
        SpeedupBaseline::Direct => PrimitiveKind::DirectNaive,
    };
    let base_shapes = layer_shapes(net, Shape5::cube(1, net.input_features, fov[0])?, &plain)?;
    let naive = network_flops(net, &base_shapes, &plain, kind, c)?
        / base_shapes.last().unwrap().len() as f64;
    let modes = if n == fov[0] {
        plain
    } else {
        alloc::vec![PoolMode::Fragments; pools]
    };
    let shapes = layer_shapes(net, Shape5::cube(s, net.input_features, n)?, &modes)?;
    let ops = network_flops(net, &shapes, &modes, PrimitiveKind::FftDataParallel, c)?;
    let out = shapes.last().unwrap();
    Ok(naive / (ops / out.len() as f64))
}

/// Peak over layers of the data-parallel FFT / pooling memory model for an
/// all-fragment run at cubic extent `n` and batch `s` (unpadded `ñ`).
pub fn network_memory(net: &NetworkSpec, n: usize, s: usize) -> Result<f64> {
    let fov = field_of_view(net);
    let pools = net.pool_layers().len();
    let modes = if n == fov[0] {
        alloc::vec![PoolMode::Plain; pools]
    } else {
        alloc::vec![PoolMode::Fragments; pools]
    };
    let shapes = layer_shapes(net, Shape5::cube(s, net.input_features, n)?, &modes)?;
    let env = ResourceEnv::new(1, usize::MAX, 0)?;
    let mut peak: f64 = 0.0;
    for (i, l) in net.layers.iter().enumerate() {
        let (sh, out) = (shapes[i], shapes[i + 1]);
        let kind = if l.is_pool() { PrimitiveKind::PoolPlain } else { PrimitiveKind::FftDataParallel };
        let nv = sh.image_len() as f64;
        let d = MemoryDims {
            s: sh.s as f64,
            f: sh.f as f64,
            f_out: (out.len() / (sh.s * out.image_len())) as f64,
            n: nv,
            n_out: out.image_len() as f64,
            nt: 2.0 * (sh.x / 2 + 1) as f64 * (sh.y * sh.z) as f64,
        };
        peak = peak.max(layer_memory(kind, &d, &env));
    }
    Ok(peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Activation;

    fn net(layers: Vec<LayerSpec>) -> NetworkSpec {
        NetworkSpec::new(1, layers).unwrap()
    }

    #[test]
    fn table_one_examples() {
        assert_eq!(layer_flops_cubic(PrimitiveKind::DirectNaive, 1, 1, 1, 4, 2, 2.5).unwrap(), 512.0);
        assert_eq!(layer_flops_cubic(PrimitiveKind::PoolFragments, 2, 3, 3, 4, 2, 2.5).unwrap(), 3072.0);
        assert!(layer_flops_cubic(PrimitiveKind::DirectNaive, 1, 1, 1, 2, 3, 2.5).is_err());
    }

    #[test]
    fn fft_flops_hand_expansion() {
        let (n, c) = (8.0f64, 2.5);
        let got = layer_flops_cubic(PrimitiveKind::FftDataParallel, 1, 1, 1, 8, 8, c).unwrap();
        let want = 3.0 * c * n.powi(3) * n.ln() * 2.0 + 4.0 * n.powi(3) + c * n * n.ln() * 3.0 * n * n;
        assert!((got - want).abs() < 1e-9 * want);
    }

    #[test]
    fn table_two_examples() {
        let env = ResourceEnv::new(4, 1 << 30, 0).unwrap();
        let d = MemoryDims { s: 1.0, f: 2.0, f_out: 3.0, n: 64.0, n_out: 8.0, nt: 96.0 };
        assert_eq!(layer_memory(PrimitiveKind::FftDataParallel, &d, &env), 320.0);
        assert_eq!(layer_memory(PrimitiveKind::DirectNaive, &d, &env), 2.0 * 64.0 + 3.0 * 8.0);
        assert_eq!(layer_memory(PrimitiveKind::DirectTemp, &d, &env), 2.0 * 64.0 + 3.0 * 8.0 + 4.0 * 8.0);
        assert_eq!(transformed_len(PrimitiveKind::FftDataParallel, [4; 3], &RadixProfile::default()), 96);
    }

    #[test]
    fn fov_examples() {
        let r = Activation::Relu;
        assert_eq!(field_of_view(&net(vec![LayerSpec::conv(1, 3, r)])), [3; 3]);
        assert_eq!(
            field_of_view(&net(vec![LayerSpec::conv(1, 3, r), LayerSpec::pool(2), LayerSpec::conv(1, 3, r)])),
            [8; 3]
        );
        assert_eq!(field_of_view(&net(vec![LayerSpec::conv(1, 3, r), LayerSpec::conv(1, 3, r)])), [5; 3]);
    }

    #[test]
    fn shape_chain_with_fragments() {
        let r = Activation::Relu;
        let n = NetworkSpec::new(1, vec![LayerSpec::conv(2, 3, r), LayerSpec::pool(2), LayerSpec::conv(3, 3, r)]).unwrap();
        let shapes = layer_shapes(&n, Shape5::cube(1, 1, 9).unwrap(), &[PoolMode::Fragments]).unwrap();
        let dims: Vec<_> = shapes.iter().map(|s| (s.s, s.f, s.x)).collect();
        assert_eq!(dims, vec![(1, 1, 9), (1, 2, 7), (8, 2, 3), (8, 3, 1)]);
        assert!(layer_shapes(&n, Shape5::cube(1, 1, 9).unwrap(), &[PoolMode::Plain]).is_err());
        assert!(layer_shapes(&n, Shape5::cube(1, 1, 8).unwrap(), &[PoolMode::Fragments]).is_err());
    }

    #[test]
    fn speedup_is_one_at_fov() {
        let r = Activation::Relu;
        let n = NetworkSpec::new(1, vec![LayerSpec::conv(4, 3, r), LayerSpec::pool(2), LayerSpec::conv(4, 3, r)]).unwrap();
        assert_eq!(theoretical_speedup(&n, 8, 1, 2.5, SpeedupBaseline::Fft).unwrap(), 1.0);
    }
}
