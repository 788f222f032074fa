use alloc::vec;

use num_complex::Complex;

use super::{conv_shape, ConvLayerParams};
use crate::error::Result;
use crate::fft::{batched_forward_into, batched_inverse_into, optimal_fft_shape, Crop, Engine, FftPlan3, FftWorkspace, RadixProfile};
use crate::memory::MemoryTracker;
use crate::parallel::Parallel;
use crate::tensor::Tensor5;
use crate::Real;

const CHUNK: usize = 2048;

/// FFT convolution in three stages with all allocation between stages:
/// batch-transform the inputs; per output feature, transform its kernels and
/// accumulate products through a reused scratch; batch-inverse the outputs.
///
/// `overhead_cap` (real scalars) is reserved for the whole call and bounds the
/// number of simultaneous 1D transforms.
pub fn conv_fft_staged<T: Real, P: Parallel>(
    input: Tensor5<T>,
    params: &ConvLayerParams<T>,
    profile: &RadixProfile,
    engine: Engine,
    overhead_cap: usize,
    par: &P,
    mem: &MemoryTracker,
) -> Result<Tensor5<T>> {
    let out_shape = conv_shape(&input, params)?;
    let in_shape = input.shape();
    let held_input = mem.charge(in_shape.len())?;
    let _held_cap = mem.charge(overhead_cap)?;
    let (s_count, f, fo) = (in_shape.s, in_shape.f, out_shape.f);
    let (n, k) = (in_shape.spatial(), params.kernel_extent());
    let plan = FftPlan3::<T>::new(optimal_fft_shape(n, profile), profile, engine)?;
    let nt = plan.batched_len();
    let zero = Complex::new(T::zero(), T::zero());

    // stage 1
    let held_in_spec = mem.charge_complex(s_count * f * nt)?;
    let mut in_spec = vec![zero; s_count * f * nt];
    {
        let held_s = mem.charge_complex(f * nt)?;
        let mut scratch = vec![zero; f * nt];
        let mut ws = FftWorkspace::new(&mut scratch, overhead_cap);
        for (s, spec) in in_spec.chunks_mut(f * nt).enumerate() {
            batched_forward_into(&plan, input.batch_entry(s), n, f, spec, &mut ws, par)?;
        }
        drop(scratch);
        drop(held_s);
    }
    drop(input);
    drop(held_input);

    // stage 2
    let held_out_spec = mem.charge_complex(s_count * fo * nt)?;
    let mut out_spec = vec![zero; s_count * fo * nt];
    {
        let held_w = mem.charge_complex(f * nt)?;
        let held_s = mem.charge_complex(f * nt)?;
        let mut ker = vec![zero; f * nt];
        let mut scratch = vec![zero; f * nt];
        for i in 0..fo {
            let mut ws = FftWorkspace::new(&mut scratch, overhead_cap);
            batched_forward_into(&plan, params.kernels_for(i), k, f, &mut ker, &mut ws, par)?;
            for s in 0..s_count {
                let src = &in_spec[s * f * nt..][..f * nt];
                par.for_each(&mut scratch, CHUNK, |c, prod| {
                    let off = c * CHUNK;
                    for ((p, a), b) in prod.iter_mut().zip(&src[off..]).zip(&ker[off..]) {
                        *p = *a * *b;
                    }
                });
                let prods = &scratch;
                let dst = &mut out_spec[(s * fo + i) * nt..][..nt];
                par.for_each(dst, CHUNK, |c, acc| {
                    let off = c * CHUNK;
                    for j in 0..f {
                        for (o, p) in acc.iter_mut().zip(&prods[j * nt + off..]) {
                            *o += *p;
                        }
                    }
                });
            }
        }
        drop((ker, scratch));
        drop((held_w, held_s));
    }
    drop(in_spec);
    drop(held_in_spec);

    // stage 3
    let _held_output = mem.charge(out_shape.len())?;
    let mut out = Tensor5::zeros(out_shape);
    {
        let _held_s = mem.charge_complex(fo * nt)?;
        let mut scratch = vec![zero; fo * nt];
        let mut ws = FftWorkspace::new(&mut scratch, overhead_cap);
        let crop = Crop::new(k.map(|v| v - 1), out_shape.spatial());
        let per = fo * out_shape.image_len();
        for (s, spec) in out_spec.chunks_mut(fo * nt).enumerate() {
            let dst = &mut out.data_mut()[s * per..][..per];
            batched_inverse_into(&plan, spec, fo, crop, dst, &mut ws, par)?;
        }
    }
    drop(out_spec);
    drop(held_out_spec);
    let n_out = out_shape.image_len();
    par.for_each(out.data_mut(), n_out, |idx, img| params.finish(idx % fo, img));
    Ok(out)
}
