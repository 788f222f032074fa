use alloc::vec;

use super::{conv_shape, ConvLayerParams};
use crate::error::Result;
use crate::memory::MemoryTracker;
use crate::parallel::Parallel;
use crate::tensor::Tensor5;
use crate::Real;

/// Where partial convolutions are accumulated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DirectVariant {
    /// Straight into the output image.
    #[default]
    Naive,
    /// Into a per-worker temporary image, then added to the output.
    TempBuffer,
}

/// `out += w ∗ img` (valid, true convolution).
pub(crate) fn convolve_add<T: Real>(
    out: &mut [T],
    img: &[T],
    n: [usize; 3],
    ker: &[T],
    k: [usize; 3],
) {
    let o = [0, 1, 2].map(|a| n[a] - k[a] + 1);
    for dx in 0..k[0] {
        for dy in 0..k[1] {
            for dz in 0..k[2] {
                let w = ker[((k[0] - 1 - dx) * k[1] + (k[1] - 1 - dy)) * k[2] + (k[2] - 1 - dz)];
                if w == T::zero() {
                    continue;
                }
                for ux in 0..o[0] {
                    for uy in 0..o[1] {
                        let orow = &mut out[(ux * o[1] + uy) * o[2]..][..o[2]];
                        let irow = &img[((ux + dx) * n[1] + uy + dy) * n[2] + dz..][..o[2]];
                        for (ov, iv) in orow.iter_mut().zip(irow) {
                            *ov += w * *iv;
                        }
                    }
                }
            }
        }
    }
}

/// Direct convolution, parallel over output images.
pub fn conv_direct<T: Real, P: Parallel>(
    input: Tensor5<T>,
    params: &ConvLayerParams<T>,
    variant: DirectVariant,
    par: &P,
    mem: &MemoryTracker,
) -> Result<Tensor5<T>> {
    let out_shape = conv_shape(&input, params)?;
    let in_shape = input.shape();
    let held_input = mem.charge(in_shape.len())?;
    let _held_output = mem.charge(out_shape.len())?;
    let mut out = Tensor5::zeros(out_shape);
    let (n, k) = (in_shape.spatial(), params.kernel_extent());
    let n_out = out_shape.image_len();
    let fo = out_shape.f;

    match variant {
        DirectVariant::Naive => {
            par.for_each(out.data_mut(), n_out, |idx, img| {
                let (s, j) = (idx / fo, idx % fo);
                for i in 0..in_shape.f {
                    convolve_add(img, input.image(s, i), n, params.kernel(j, i), k);
                }
                params.finish(j, img);
            });
        }
        DirectVariant::TempBuffer => {
            let temps = par.workers().min(in_shape.s * fo);
            let _held_temp = mem.charge(temps * n_out)?;
            let mut scratch = vec![vec![T::zero(); n_out]; temps];
            par.for_each_chunk(out.data_mut(), n_out, &mut scratch, |tmp, idx, img| {
                let (s, j) = (idx / fo, idx % fo);
                for i in 0..in_shape.f {
                    tmp.fill(T::zero());
                    convolve_add(tmp, input.image(s, i), n, params.kernel(j, i), k);
                    for (o, t) in img.iter_mut().zip(tmp.iter()) {
                        *o += *t;
                    }
                }
                params.finish(j, img);
            });
        }
    }
    drop(input);
    drop(held_input);
    Ok(out)
}
