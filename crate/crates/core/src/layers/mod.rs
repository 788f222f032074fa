//! Layer primitives.
//!
//! Every primitive consumes its input tensor, charges the buffers it holds to
//! a [`MemoryTracker`](crate::memory::MemoryTracker) (input at entry, freed as
//! soon as the algorithm no longer needs it) and returns the output tensor.
//! Convolution is valid and true (kernel index-flipped):
//! `O[s,j][u] = act(b_j + Σ_i Σ_m w_ji[m] · I[s,i][u + k − 1 − m])`.

mod direct;
mod fft_data;
mod fft_staged;
mod fft_task;
mod params;
mod pool;
pub mod task_graph;

pub use direct::{conv_direct, DirectVariant};
pub use fft_data::conv_fft_data_parallel;
pub use fft_staged::conv_fft_staged;
pub use fft_task::{conv_fft_task_parallel, conv_fft_task_parallel_traced, TaskPool, TaskRunner};
pub use params::{Activation, ConvLayerParams, PoolMode, PoolParams};
pub use pool::{max_pool, mpf_pool, pool, recombine_fragments};

use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::parallel::Parallel;
use crate::tensor::{Shape5, Tensor5};
use crate::Real;

pub(crate) fn check_finite<T: Real>(input: &Tensor5<T>) -> Result<()> {
    if input.has_nan() {
        return Err(invalid!("input contains NaN"));
    }
    Ok(())
}

/// Validates a convolution call and returns the output shape.
pub(crate) fn conv_shape<T: Real>(input: &Tensor5<T>, params: &ConvLayerParams<T>) -> Result<Shape5> {
    check_finite(input)?;
    params.output_shape(input.shape())
}

const MAD_CHUNK: usize = 2048;

/// `acc[e] += a[e] · b[e]`, chunked across workers.
pub(crate) fn parallel_mad<T: Real, P: Parallel>(
    acc: &mut [Complex<T>],
    a: &[Complex<T>],
    b: &[Complex<T>],
    par: &P,
) {
    par.for_each(acc, MAD_CHUNK, |i, c| {
        let off = i * MAD_CHUNK;
        for ((o, x), y) in c.iter_mut().zip(&a[off..]).zip(&b[off..]) {
            *o += *x * *y;
        }
    });
}
