use alloc::vec::Vec;

use super::{check_finite, PoolMode, PoolParams};
use crate::error::{invalid, Result};
use crate::memory::MemoryTracker;
use crate::parallel::Parallel;
use crate::tensor::{Shape5, Tensor5};
use crate::Real;

/// Max over `p`-blocks of `img` starting at `offset`, `m` blocks per axis.
fn pool_image<T: Real>(out: &mut [T], img: &[T], n: [usize; 3], p: [usize; 3], offset: [usize; 3], m: [usize; 3]) {
    for ux in 0..m[0] {
        for uy in 0..m[1] {
            for uz in 0..m[2] {
                let mut best = T::neg_infinity();
                for a in 0..p[0] {
                    for b in 0..p[1] {
                        let row = ((offset[0] + ux * p[0] + a) * n[1] + offset[1] + uy * p[1] + b) * n[2]
                            + offset[2]
                            + uz * p[2];
                        for v in &img[row..row + p[2]] {
                            best = best.max(*v);
                        }
                    }
                }
                out[(ux * m[1] + uy) * m[2] + uz] = best;
            }
        }
    }
}

/// Non-overlapping max pooling; extents must be divisible by the window.
pub fn max_pool<T: Real, P: Parallel>(
    input: Tensor5<T>,
    window: [usize; 3],
    par: &P,
    mem: &MemoryTracker,
) -> Result<Tensor5<T>> {
    pool(input, PoolParams::new(window, PoolMode::Plain)?, par, mem)
}

/// Max-pooling fragments: for every window offset `o` (lexicographic), the
/// plain pooling of the input shifted by `o`. All fragments of batch entry
/// `s` are contiguous, at batch indices `s·P .. (s+1)·P`.
pub fn mpf_pool<T: Real, P: Parallel>(
    input: Tensor5<T>,
    window: [usize; 3],
    par: &P,
    mem: &MemoryTracker,
) -> Result<Tensor5<T>> {
    pool(input, PoolParams::new(window, PoolMode::Fragments)?, par, mem)
}

pub fn pool<T: Real, P: Parallel>(
    input: Tensor5<T>,
    params: PoolParams,
    par: &P,
    mem: &MemoryTracker,
) -> Result<Tensor5<T>> {
    check_finite(&input)?;
    let in_shape = input.shape();
    let out_shape = params.output_shape(in_shape)?;
    let held_input = mem.charge(in_shape.len())?;
    let _held_output = mem.charge(out_shape.len())?;
    let mut out = Tensor5::zeros(out_shape);
    let p = params.window;
    let frags = match params.mode {
        PoolMode::Plain => 1,
        PoolMode::Fragments => params.volume(),
    };
    let (f, n, m) = (in_shape.f, in_shape.spatial(), out_shape.spatial());
    par.for_each(out.data_mut(), out_shape.image_len(), |idx, img| {
        let (b, feat) = (idx / f, idx % f);
        let (s, o) = (b / frags, b % frags);
        let offset = match params.mode {
            PoolMode::Plain => [0; 3],
            PoolMode::Fragments => [o / (p[1] * p[2]), (o / p[2]) % p[1], o % p[2]],
        };
        pool_image(img, input.image(s, feat), n, p, offset, m);
    });
    drop(input);
    drop(held_input);
    Ok(out)
}

/// Interleaves fragments back into dense images.
///
/// `windows` lists the windows of the fragment-mode pooling layers in network
/// order. Batch entry `((s·P₁ + o₁)·P₂ + o₂)…` is fragment `(o₁, o₂, …)` of
/// input `s`; its voxel `u` lands at dense offset `Σ o_l·c_l + c·u` per axis,
/// where `c_l` is the product of the windows before layer `l` and `c` the
/// product of all of them.
pub fn recombine_fragments<T: Real>(frags: &Tensor5<T>, windows: &[[usize; 3]]) -> Result<Tensor5<T>> {
    let sh = frags.shape();
    let volumes: Vec<usize> = windows.iter().map(|w| w.iter().product()).collect();
    if windows.iter().any(|w| w.contains(&0)) {
        return Err(invalid!("zero pooling window in {windows:?}"));
    }
    let alpha: usize = volumes.iter().product();
    if !sh.s.is_multiple_of(alpha) {
        return Err(invalid!("batch {} not divisible by fragment count {alpha}", sh.s));
    }
    let total = [0, 1, 2].map(|a| windows.iter().map(|w| w[a]).product::<usize>());
    let m = sh.spatial();
    let dense = [0, 1, 2].map(|a| total[a] * m[a]);
    let out_shape = Shape5::from_spatial(sh.s / alpha, sh.f, dense)?;
    let mut out = Tensor5::zeros(out_shape);
    for b in 0..sh.s {
        let mut rest = b;
        let mut base = [0usize; 3];
        // decode from the innermost (last) pooling layer outwards
        let mut stride = total;
        for (w, vol) in windows.iter().zip(&volumes).rev() {
            let o = rest % vol;
            rest /= vol;
            let off = [o / (w[1] * w[2]), (o / w[2]) % w[1], o % w[2]];
            for a in 0..3 {
                stride[a] /= w[a];
                base[a] += off[a] * stride[a];
            }
        }
        let s = rest;
        for feat in 0..sh.f {
            let src = frags.image(b, feat);
            let dst = out.image_mut(s, feat);
            for ux in 0..m[0] {
                for uy in 0..m[1] {
                    for uz in 0..m[2] {
                        let d = [ux, uy, uz];
                        let pos = [0, 1, 2].map(|a| base[a] + total[a] * d[a]);
                        dst[(pos[0] * dense[1] + pos[1]) * dense[2] + pos[2]] = src[(ux * m[1] + uy) * m[2] + uz];
                    }
                }
            }
        }
    }
    Ok(out)
}
