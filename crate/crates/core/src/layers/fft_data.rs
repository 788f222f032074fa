use alloc::vec;

use num_complex::Complex;

use super::{conv_shape, parallel_mad, ConvLayerParams};
use crate::error::Result;
use crate::fft::{nested_forward_into, nested_inverse_into, optimal_fft_shape, Crop, Engine, FftPlan3, RadixProfile};
use crate::memory::MemoryTracker;
use crate::parallel::Parallel;
use crate::tensor::Tensor5;
use crate::Real;

/// FFT convolution with every transform and multiply-add parallelized
/// internally. Input spectra for the whole batch are kept while output
/// spectra are accumulated one output feature at a time.
pub fn conv_fft_data_parallel<T: Real, P: Parallel>(
    input: Tensor5<T>,
    params: &ConvLayerParams<T>,
    profile: &RadixProfile,
    engine: Engine,
    par: &P,
    mem: &MemoryTracker,
) -> Result<Tensor5<T>> {
    let out_shape = conv_shape(&input, params)?;
    let in_shape = input.shape();
    let held_input = mem.charge(in_shape.len())?;
    let (s_count, f, fo) = (in_shape.s, in_shape.f, out_shape.f);
    let (n, k) = (in_shape.spatial(), params.kernel_extent());
    let plan = FftPlan3::<T>::new(optimal_fft_shape(n, profile), profile, engine)?;
    let nt = plan.nested_len();
    let zero = Complex::new(T::zero(), T::zero());

    let _held_in_spec = mem.charge_complex(s_count * f * nt)?;
    let mut in_spec = vec![zero; s_count * f * nt];
    for (b, spec) in in_spec.chunks_mut(nt).enumerate() {
        nested_forward_into(&plan, input.image(b / f, b % f), n, spec, par)?;
    }
    drop(input);
    drop(held_input);

    let _held_output = mem.charge(out_shape.len())?;
    let mut out = Tensor5::zeros(out_shape);
    let _held_acc = mem.charge_complex(s_count * nt)?;
    let mut acc = vec![zero; s_count * nt];
    let _held_kernel = mem.charge_complex(nt)?;
    let mut ker = vec![zero; nt];
    let crop = Crop::new(k.map(|v| v - 1), out_shape.spatial());

    for i in 0..fo {
        acc.fill(zero);
        for j in 0..f {
            nested_forward_into(&plan, params.kernel(i, j), k, &mut ker, par)?;
            for (s, a) in acc.chunks_mut(nt).enumerate() {
                parallel_mad(a, &in_spec[(s * f + j) * nt..][..nt], &ker, par);
            }
        }
        for (s, a) in acc.chunks_mut(nt).enumerate() {
            let img = out.image_mut(s, i);
            nested_inverse_into(&plan, a, crop, img, par)?;
            params.finish(i, img);
        }
    }
    Ok(out)
}
