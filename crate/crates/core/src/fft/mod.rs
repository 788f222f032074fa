//! Pruned real-to-complex 3D transforms.
//!
//! Images are zero-padded to admissible lengths (see [`RadixProfile`]) and
//! transformed one axis at a time, skipping 1D transforms of lines that are
//! known to be all zero. Two storage conventions exist:
//!
//! * nested ([`pruned_fft_forward`]): one image, half-spectrum along x, result
//!   laid out `(x′/2+1, y′, z′)`;
//! * batched ([`batched_fft_forward`]): `b` images, half-spectrum along z,
//!   result laid out `(b, z′/2+1, y′, x′)` after two axis permutations.
//!
//! Inverses are normalized by `1/(x′y′z′)` and crop while transforming.

mod batched;
mod line;
mod nested;
mod radix;

pub use batched::{batched_fft_forward, batched_fft_inverse, batched_forward_into, batched_inverse_into};
pub use line::{hermitian_extend, Engine, LinePlan};
pub use nested::{nested_forward_into, nested_inverse_into, pruned_fft_forward, pruned_fft_inverse};
pub use radix::{optimal_fft_shape, optimal_fft_size, RadixProfile};

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::real::ln;
use crate::Real;

/// Line plans for a padded 3D extent.
#[derive(Clone, Debug)]
pub struct FftPlan3<T> {
    padded: [usize; 3],
    lines: [LinePlan<T>; 3],
}

impl<T: Real> FftPlan3<T> {
    /// Fails unless every padded extent is admitted by `profile`.
    pub fn new(padded: [usize; 3], profile: &RadixProfile, engine: Engine) -> Result<Self> {
        if let Some(bad) = padded.iter().find(|&&n| !profile.admits(n)) {
            return Err(invalid!("padded extent {bad} is not admissible under {profile:?}"));
        }
        Ok(Self::any_size(padded, engine))
    }

    /// No admissibility check; any positive extents work.
    pub fn any_size(padded: [usize; 3], engine: Engine) -> Self {
        FftPlan3 {
            padded,
            lines: padded.map(|n| LinePlan::new(n, engine)),
        }
    }

    pub fn padded(&self) -> [usize; 3] {
        self.padded
    }

    pub fn line(&self, axis: usize) -> &LinePlan<T> {
        &self.lines[axis]
    }

    /// `x′·y′·z′`.
    pub fn volume(&self) -> usize {
        self.padded.iter().product()
    }

    /// Complex elements of a nested half-spectrum: `(x′/2+1)·y′·z′`.
    pub fn nested_len(&self) -> usize {
        (self.padded[0] / 2 + 1) * self.padded[1] * self.padded[2]
    }

    /// Complex elements of one image of a batched half-spectrum: `x′·y′·(z′/2+1)`.
    pub fn batched_len(&self) -> usize {
        self.padded[0] * self.padded[1] * (self.padded[2] / 2 + 1)
    }

    pub(crate) fn check_image(&self, dims: [usize; 3]) -> Result<()> {
        if dims.iter().zip(&self.padded).any(|(d, p)| d > p) || dims.contains(&0) {
            return Err(invalid!("image {dims:?} does not fit padded extent {:?}", self.padded));
        }
        Ok(())
    }

    pub(crate) fn check_crop(&self, crop: Crop) -> Result<()> {
        for a in 0..3 {
            if crop.extent[a] == 0 || crop.offset[a] + crop.extent[a] > self.padded[a] {
                return Err(invalid!("crop {crop:?} exceeds padded extent {:?}", self.padded));
            }
        }
        Ok(())
    }

    pub(crate) fn line_scratch(&self, workers: usize) -> Vec<LineScratch<T>> {
        let n = *self.padded.iter().max().unwrap();
        (0..workers.max(1)).map(|_| LineScratch::new(n)).collect()
    }
}

/// Region kept by an inverse transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crop {
    pub offset: [usize; 3],
    pub extent: [usize; 3],
}

impl Crop {
    pub fn new(offset: [usize; 3], extent: [usize; 3]) -> Self {
        Crop { offset, extent }
    }

    pub fn len(&self) -> usize {
        self.extent.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<[usize; 3]> for Crop {
    fn from(extent: [usize; 3]) -> Self {
        Crop {
            offset: [0; 3],
            extent,
        }
    }
}

/// Per-worker line buffers.
pub(crate) struct LineScratch<T> {
    pub buf: Vec<Complex<T>>,
    pub tmp: Vec<Complex<T>>,
}

impl<T: Real> LineScratch<T> {
    fn new(n: usize) -> Self {
        let z = Complex::new(T::zero(), T::zero());
        LineScratch {
            buf: vec![z; n],
            tmp: vec![z; n],
        }
    }
}

/// Default cap on simultaneous line-transform overhead: 64 MiB of scalars.
pub fn default_overhead_cap<T>() -> usize {
    (64 << 20) / core::mem::size_of::<T>()
}

/// Scratch for the batched transforms.
///
/// `scratch` must hold the permuted intermediate, `b·x·z″·y′` complex
/// elements for `b` images of x-extent `x`. `overhead_cap` bounds the memory
/// (in real scalars) used by concurrently running 1D transforms, which sets
/// the sub-batch size.
#[derive(Debug)]
pub struct FftWorkspace<'a, T> {
    pub scratch: &'a mut [Complex<T>],
    pub overhead_cap: usize,
    sub_batches: usize,
    largest_sub_batch: usize,
}

impl<'a, T: Real> FftWorkspace<'a, T> {
    pub fn new(scratch: &'a mut [Complex<T>], overhead_cap: usize) -> Self {
        FftWorkspace {
            scratch,
            overhead_cap,
            sub_batches: 0,
            largest_sub_batch: 0,
        }
    }

    /// Lines of length `len` that may be transformed at once.
    pub fn sub_batch_limit(&self, len: usize) -> Result<usize> {
        let per_line = 4 * len;
        match self.overhead_cap / per_line {
            0 => Err(Error::ResourceExhausted {
                requested: per_line,
                in_use: 0,
                capacity: self.overhead_cap,
            }),
            n => Ok(n),
        }
    }

    /// Sub-batches executed so far.
    pub fn sub_batches(&self) -> usize {
        self.sub_batches
    }

    /// Largest sub-batch executed so far.
    pub fn largest_sub_batch(&self) -> usize {
        self.largest_sub_batch
    }

    pub(crate) fn record(&mut self, lines: usize) {
        self.sub_batches += 1;
        self.largest_sub_batch = self.largest_sub_batch.max(lines);
    }

    pub(crate) fn require(&self, len: usize) -> Result<()> {
        if self.scratch.len() < len {
            return Err(Error::ResourceExhausted {
                requested: 2 * len,
                in_use: 0,
                capacity: 2 * self.scratch.len(),
            });
        }
        Ok(())
    }
}

/// `C·n·ln n·(k² + k·n + n²)`: one cubic image of support `k³` padded to `n³`.
pub fn pruned_fft_flops(n: f64, k: f64, c: f64) -> f64 {
    c * n * ln(n) * (k * k + k * n + n * n)
}

/// `C·n³·ln(n³)`: the unpruned transform.
pub fn naive_fft_flops(n: f64, c: f64) -> f64 {
    c * n * n * n * ln(n * n * n)
}

/// Anisotropic pruned cost: `ky·kz` lines along x, `x′·kz` along y, `x′·y′` along z.
pub fn pruned_fft_flops_3d(padded: [usize; 3], support: [usize; 3], c: f64) -> f64 {
    let [nx, ny, nz] = padded.map(|v| v as f64);
    let [_, ky, kz] = support.map(|v| v as f64);
    c * (ky * kz * nx * ln(nx) + nx * kz * ny * ln(ny) + nx * ny * nz * ln(nz))
}
