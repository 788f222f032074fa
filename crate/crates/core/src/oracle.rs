//! Slow reference implementations used to check the fast paths.
//!
//! Everything here works in `f64` and follows the mathematical definitions
//! literally: direct DFT summation, six-nested-loop convolution, and a
//! sliding-window evaluation that runs the network separately at every
//! window position.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex;

use crate::cost::{field_of_view, layer_shapes};
use crate::error::{invalid, Result};
use crate::layers::{ConvLayerParams, PoolMode};
use crate::network::{LayerSpec, NetworkSpec, Weights};
use crate::tensor::{Shape5, Tensor5};

fn dft_axis(data: &mut [Complex<f64>], dims: [usize; 3], axis: usize, sign: f64) {
    let n = dims[axis];
    let stride = match axis {
        0 => dims[1] * dims[2],
        1 => dims[2],
        _ => 1,
    };
    let table: Vec<Complex<f64>> = (0..n)
        .map(|t| {
            let a = sign * 2.0 * core::f64::consts::PI * t as f64 / n as f64;
            Complex::new(num_traits::Float::cos(a), num_traits::Float::sin(a))
        })
        .collect();
    let mut line = vec![Complex::new(0.0, 0.0); n];
    let total: usize = dims.iter().product();
    for start in 0..total {
        let idx = [start / (dims[1] * dims[2]), (start / dims[2]) % dims[1], start % dims[2]];
        if idx[axis] != 0 {
            continue;
        }
        for (k, l) in line.iter_mut().enumerate() {
            *l = (0..n).map(|j| data[start + j * stride] * table[(j * k) % n]).sum();
        }
        for (k, l) in line.iter().enumerate() {
            data[start + k * stride] = *l;
        }
    }
}

/// Full (not half) spectrum of `img` zero-padded to `padded`, by direct
/// summation along each axis; row-major `(x′, y′, z′)`.
pub fn dense_dft3(img: &[f64], dims: [usize; 3], padded: [usize; 3]) -> Vec<Complex<f64>> {
    let mut data = vec![Complex::new(0.0, 0.0); padded.iter().product()];
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                data[(x * padded[1] + y) * padded[2] + z] = Complex::new(img[(x * dims[1] + y) * dims[2] + z], 0.0);
            }
        }
    }
    for axis in 0..3 {
        dft_axis(&mut data, padded, axis, -1.0);
    }
    data
}

/// Normalized inverse of a full spectrum by direct summation.
pub fn dense_idft3(spec: &[Complex<f64>], padded: [usize; 3]) -> Vec<Complex<f64>> {
    let mut data = spec.to_vec();
    for axis in 0..3 {
        dft_axis(&mut data, padded, axis, 1.0);
    }
    let scale = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|v| *v *= scale);
    data
}

/// Triple-sum 3D DFT without separating axes; only for tiny sizes.
pub fn dense_dft3_unseparated(data: &[Complex<f64>], dims: [usize; 3]) -> Vec<Complex<f64>> {
    let total: usize = dims.iter().product();
    let mut out = vec![Complex::new(0.0, 0.0); total];
    for (o, ov) in out.iter_mut().enumerate() {
        let k = [o / (dims[1] * dims[2]), (o / dims[2]) % dims[1], o % dims[2]];
        for (i, v) in data.iter().enumerate() {
            let j = [i / (dims[1] * dims[2]), (i / dims[2]) % dims[1], i % dims[2]];
            let phase: f64 = (0..3).map(|a| ((j[a] * k[a]) % dims[a]) as f64 / dims[a] as f64).sum();
            let a = -2.0 * core::f64::consts::PI * phase;
            *ov += v * Complex::new(num_traits::Float::cos(a), num_traits::Float::sin(a));
        }
    }
    out
}

/// Valid true convolution by six nested loops per output voxel, then bias
/// and transfer function.
pub fn conv_naive(input: &Tensor5<f64>, params: &ConvLayerParams<f64>) -> Result<Tensor5<f64>> {
    let out_shape = params.output_shape(input.shape())?;
    let k = params.kernel_extent();
    let mut out = Tensor5::zeros(out_shape);
    for s in 0..out_shape.s {
        for j in 0..out_shape.f {
            for ux in 0..out_shape.x {
                for uy in 0..out_shape.y {
                    for uz in 0..out_shape.z {
                        let mut acc = 0.0;
                        for i in 0..input.shape().f {
                            for mx in 0..k[0] {
                                for my in 0..k[1] {
                                    for mz in 0..k[2] {
                                        let w = params.kernels().get([j, i, mx, my, mz]);
                                        let v = input.get([s, i, ux + k[0] - 1 - mx, uy + k[1] - 1 - my, uz + k[2] - 1 - mz]);
                                        acc += w * v;
                                    }
                                }
                            }
                        }
                        let v = params.activation().apply(acc + params.bias()[j]);
                        out.set([s, j, ux, uy, uz], v);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Plain max pooling by enumeration.
pub fn max_pool_naive(input: &Tensor5<f64>, p: [usize; 3]) -> Result<Tensor5<f64>> {
    let sh = input.shape();
    let n = sh.spatial();
    if (0..3).any(|a| !n[a].is_multiple_of(p[a])) {
        return Err(invalid!("extent {n:?} not divisible by {p:?}"));
    }
    let out_shape = Shape5::from_spatial(sh.s, sh.f, [0, 1, 2].map(|a| n[a] / p[a]))?;
    Ok(Tensor5::from_fn(out_shape, |[s, f, x, y, z]| {
        let mut best = f64::NEG_INFINITY;
        for a in 0..p[0] {
            for b in 0..p[1] {
                for c in 0..p[2] {
                    best = best.max(input.get([s, f, x * p[0] + a, y * p[1] + b, z * p[2] + c]));
                }
            }
        }
        best
    }))
}

/// Runs `net` on an input of exactly its field of view, with plain pooling
/// and naive convolution; returns the `f_out` values of the single output voxel.
pub fn network_at_fov(net: &NetworkSpec, weights: &Weights<f64>, window: &Tensor5<f64>) -> Result<Vec<f64>> {
    let mut cur = window.clone();
    let mut conv = weights.layers.iter();
    for l in &net.layers {
        cur = match *l {
            LayerSpec::Conv { .. } => conv_naive(&cur, conv.next().ok_or_else(|| invalid!("missing weights"))?)?,
            LayerSpec::Pool { window, .. } => max_pool_naive(&cur, window)?,
        };
    }
    if cur.shape().image_len() != 1 {
        return Err(invalid!("field-of-view input produced {:?}", cur.shape()));
    }
    Ok(cur.data().to_vec())
}

/// Dense sliding-window output: the network evaluated independently on every
/// field-of-view window of `input`. Output extents are `n − fov + 1`.
pub fn sliding_window(net: &NetworkSpec, weights: &Weights<f64>, input: &Tensor5<f64>) -> Result<Tensor5<f64>> {
    weights.check(net)?;
    let fov = field_of_view(net);
    let sh = input.shape();
    let n = sh.spatial();
    if (0..3).any(|a| n[a] < fov[a]) {
        return Err(invalid!("input {n:?} smaller than field of view {fov:?}"));
    }
    let plain = vec![PoolMode::Plain; net.pool_layers().len()];
    layer_shapes(net, Shape5::from_spatial(1, sh.f, fov)?, &plain)?;
    let out_ext = [0, 1, 2].map(|a| n[a] - fov[a] + 1);
    let mut out = Tensor5::zeros(Shape5::from_spatial(sh.s, net.output_features(), out_ext)?);
    for s in 0..sh.s {
        let single = input.batch_slice(s, 1)?;
        for x in 0..out_ext[0] {
            for y in 0..out_ext[1] {
                for z in 0..out_ext[2] {
                    let window = single.crop([x, y, z], fov)?;
                    for (j, v) in network_at_fov(net, weights, &window)?.into_iter().enumerate() {
                        out.set([s, j, x, y, z], v);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Highest modeled host-only throughput, by brute force over every pool mode
/// assignment, every input extent (cubes from 1, or the anisotropic grid)
/// and every combination of host conv primitives. Shape rules are applied
/// here directly rather than through the planner.
pub fn exhaustive_host_throughput(
    net: &NetworkSpec,
    host: &crate::planner::HostModel,
    search: &crate::planner::ShapeSearch,
) -> Option<f64> {
    use crate::cost::{implementation_memory, layer_flops, transformed_len, LayerDims, MemoryDims, PrimitiveKind};
    use crate::fft::optimal_fft_shape;

    let pools: Vec<usize> = (0..net.len()).filter(|&i| net.layers[i].is_pool()).collect();
    let cap = host.env.capacity as f64;
    let rate = host.constants.flop_rate;
    let mut shapes: Vec<[usize; 3]> = Vec::new();
    match search.anisotropic_step {
        None => shapes.extend((1..=search.max_extent).map(|n| [n; 3])),
        Some(step) => {
            let fov = field_of_view(net);
            for x in (fov[0]..=search.max_extent).step_by(step.max(1)) {
                for y in (fov[1]..=search.max_extent).step_by(step.max(1)) {
                    for z in (fov[2]..=search.max_extent).step_by(step.max(1)) {
                        shapes.push([x, y, z]);
                    }
                }
            }
        }
    }
    let mut best: Option<f64> = None;
    for mask in 0..(1usize << pools.len()) {
        let fragments = |p: usize| mask >> p & 1 == 1;
        let allowed = pools.iter().enumerate().all(|(p, &i)| match net.layers[i] {
            LayerSpec::Pool { choice, .. } => choice
                .candidates()
                .contains(&if fragments(p) { PoolMode::Fragments } else { PoolMode::Plain }),
            LayerSpec::Conv { .. } => true,
        });
        if !allowed {
            continue;
        }
        'shape: for &n0 in &shapes {
            // (seconds, memory) options per layer
            let mut options: Vec<Vec<f64>> = Vec::new();
            let (mut s, mut f, mut n) = (search.batch, net.input_features, n0);
            let mut pool_no = 0;
            for l in &net.layers {
                let sf = s as f64;
                let nv = (n[0] * n[1] * n[2]) as f64;
                let mut opts = Vec::new();
                match *l {
                    LayerSpec::Conv { features, kernel, .. } => {
                        if (0..3).any(|a| kernel[a] > n[a]) {
                            continue 'shape;
                        }
                        let m = [0, 1, 2].map(|a| n[a] - kernel[a] + 1);
                        for kind in PrimitiveKind::HOST_CONV {
                            let ext = if kind.is_fft() { optimal_fft_shape(n, &host.profile) } else { n };
                            let nt = if kind.is_fft() { transformed_len(kind, n, &host.profile) as f64 } else { 0.0 };
                            let md = MemoryDims {
                                s: sf,
                                f: f as f64,
                                f_out: features as f64,
                                n: nv,
                                n_out: (m[0] * m[1] * m[2]) as f64,
                                nt,
                            };
                            if implementation_memory(kind, &md, &host.env) > cap {
                                continue;
                            }
                            let ld = LayerDims { s, f, f_out: features, n: ext, k: kernel };
                            let flops = layer_flops(kind, &ld, host.constants.c).ok()?;
                            opts.push(flops / (rate * kind.speed_factor()));
                        }
                        f = features;
                        n = m;
                    }
                    LayerSpec::Pool { window, .. } => {
                        let frag = fragments(pool_no);
                        pool_no += 1;
                        let ok = (0..3).all(|a| {
                            if frag {
                                (n[a] + 1) % window[a] == 0 && n[a] >= window[a]
                            } else {
                                n[a] % window[a] == 0
                            }
                        });
                        if !ok {
                            continue 'shape;
                        }
                        let vol = window[0] * window[1] * window[2];
                        let m = [0, 1, 2].map(|a| n[a] / window[a]);
                        let (kind, s_out) = if frag { (PrimitiveKind::PoolFragments, s * vol) } else { (PrimitiveKind::PoolPlain, s) };
                        let mem = sf * f as f64 * nv + (s_out * f * m[0] * m[1] * m[2]) as f64;
                        if mem <= cap {
                            let ld = LayerDims { s, f, f_out: f, n, k: window };
                            let flops = layer_flops(kind, &ld, host.constants.c).ok()?;
                            opts.push(flops / (rate * kind.speed_factor()));
                        }
                        s = s_out;
                        n = m;
                    }
                }
                if opts.is_empty() {
                    continue 'shape;
                }
                options.push(opts);
            }
            let out_len = (s * f * n[0] * n[1] * n[2]) as f64;
            if mask != 0 && 2.0 * out_len > cap {
                continue;
            }
            let voxels = (s * n[0] * n[1] * n[2]) as f64;
            // every combination, summed in layer order
            let mut pick = vec![0usize; options.len()];
            loop {
                let total = options.iter().zip(&pick).fold(0.0, |acc, (o, &p)| acc + o[p]);
                let t = voxels / total;
                if best.is_none_or(|b| t > b) {
                    best = Some(t);
                }
                let mut d = 0;
                while d < pick.len() {
                    pick[d] += 1;
                    if pick[d] < options[d].len() {
                        break;
                    }
                    pick[d] = 0;
                    d += 1;
                }
                if d == pick.len() {
                    break;
                }
            }
        }
    }
    best
}
