//! Dense tensors.
//!
//! [`Tensor5`] is the layer input/output: a batch of `s` tuples of `f` real 3D
//! images, stored row-major with `z` fastest. [`ComplexTensor`] holds
//! transformed images in whatever storage order a transform left them in; its
//! `axes` tag says which logical axis each storage axis carries.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::Real;

/// Extents of a 5D tensor `(s, f, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shape5 {
    pub s: usize,
    pub f: usize,
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Shape5 {
    pub fn new(s: usize, f: usize, x: usize, y: usize, z: usize) -> Result<Self> {
        let shape = Shape5 { s, f, x, y, z };
        if shape.dims().contains(&0) {
            return Err(invalid!("all extents must be >= 1, got {shape:?}"));
        }
        shape
            .dims()
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= isize::MAX as usize)
            .ok_or_else(|| invalid!("element count of {shape:?} overflows"))?;
        Ok(shape)
    }

    pub fn cube(s: usize, f: usize, n: usize) -> Result<Self> {
        Self::new(s, f, n, n, n)
    }

    pub fn from_spatial(s: usize, f: usize, n: [usize; 3]) -> Result<Self> {
        Self::new(s, f, n[0], n[1], n[2])
    }

    pub fn dims(&self) -> [usize; 5] {
        [self.s, self.f, self.x, self.y, self.z]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }

    /// Voxels in one image.
    pub fn image_len(&self) -> usize {
        self.x * self.y * self.z
    }

    pub fn len(&self) -> usize {
        self.s * self.f * self.image_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn strides(&self) -> [usize; 5] {
        strides_of(&self.dims()).try_into().unwrap()
    }

    pub fn offset(&self, idx: [usize; 5]) -> usize {
        let st = self.strides();
        idx.iter().zip(st.iter()).map(|(i, s)| i * s).sum()
    }

    pub fn unravel(&self, mut lin: usize) -> [usize; 5] {
        let st = self.strides();
        let mut out = [0; 5];
        for (o, s) in out.iter_mut().zip(st.iter()) {
            *o = lin / s;
            lin %= s;
        }
        out
    }

    pub fn with_batch(&self, s: usize) -> Result<Self> {
        Self::new(s, self.f, self.x, self.y, self.z)
    }
}

/// Row-major strides for `dims` (last axis fastest).
pub fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut st = vec![1; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        st[a] = st[a + 1] * dims[a + 1];
    }
    st
}

/// Batch-major 5D real tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor5<T> {
    shape: Shape5,
    data: Vec<T>,
}

impl<T: Real> Tensor5<T> {
    pub fn zeros(shape: Shape5) -> Self {
        Tensor5 {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn from_vec(shape: Shape5, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(invalid!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                shape.len()
            ));
        }
        Ok(Tensor5 { shape, data })
    }

    pub fn from_fn(shape: Shape5, mut f: impl FnMut([usize; 5]) -> T) -> Self {
        let data = (0..shape.len()).map(|i| f(shape.unravel(i))).collect();
        Tensor5 { shape, data }
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, idx: [usize; 5]) -> T {
        self.data[self.shape.offset(idx)]
    }

    pub fn set(&mut self, idx: [usize; 5], v: T) {
        let o = self.shape.offset(idx);
        self.data[o] = v;
    }

    pub fn image(&self, s: usize, f: usize) -> &[T] {
        let n = self.shape.image_len();
        let start = (s * self.shape.f + f) * n;
        &self.data[start..start + n]
    }

    pub fn image_mut(&mut self, s: usize, f: usize) -> &mut [T] {
        let n = self.shape.image_len();
        let start = (s * self.shape.f + f) * n;
        &mut self.data[start..start + n]
    }

    /// All `f` images of batch entry `s`, contiguous.
    pub fn batch_entry(&self, s: usize) -> &[T] {
        let n = self.shape.f * self.shape.image_len();
        &self.data[s * n..(s + 1) * n]
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    /// Zero-extends every image to `target` spatial extents, data at offset zero.
    pub fn embed_zero(&self, target: Shape5) -> Result<Self> {
        let src = self.shape;
        if target.s != src.s || target.f != src.f {
            return Err(invalid!("embed_zero cannot change s or f ({src:?} -> {target:?})"));
        }
        if target.x < src.x || target.y < src.y || target.z < src.z {
            return Err(invalid!("embed target {target:?} smaller than source {src:?}"));
        }
        let mut out = Tensor5::zeros(target);
        for img in 0..src.s * src.f {
            let si = &self.data[img * src.image_len()..(img + 1) * src.image_len()];
            let di = &mut out.data[img * target.image_len()..(img + 1) * target.image_len()];
            copy_box(si, src.spatial(), [0; 3], src.spatial(), di, target.spatial(), [0; 3]);
        }
        Ok(out)
    }

    /// Spatial crop of every image: `extent` voxels starting at `offset`.
    pub fn crop(&self, offset: [usize; 3], extent: [usize; 3]) -> Result<Self> {
        let src = self.shape;
        for a in 0..3 {
            if offset[a] + extent[a] > src.spatial()[a] {
                return Err(invalid!("crop {offset:?}+{extent:?} exceeds {src:?}"));
            }
        }
        let target = Shape5::from_spatial(src.s, src.f, extent)?;
        let mut out = Tensor5::zeros(target);
        for img in 0..src.s * src.f {
            let si = &self.data[img * src.image_len()..(img + 1) * src.image_len()];
            let di = &mut out.data[img * target.image_len()..(img + 1) * target.image_len()];
            copy_box(si, src.spatial(), offset, extent, di, extent, [0; 3]);
        }
        Ok(out)
    }

    /// Batch entries `start..start + count`.
    pub fn batch_slice(&self, start: usize, count: usize) -> Result<Self> {
        if count == 0 || start + count > self.shape.s {
            return Err(invalid!(
                "batch slice {start}..{} out of range for batch {}",
                start + count,
                self.shape.s
            ));
        }
        let per = self.shape.f * self.shape.image_len();
        let shape = self.shape.with_batch(count)?;
        Ok(Tensor5 {
            shape,
            data: self.data[start * per..(start + count) * per].to_vec(),
        })
    }

    /// Concatenates along the batch axis; all parts must agree on `f, x, y, z`.
    pub fn concat_batch(parts: Vec<Tensor5<T>>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| invalid!("concat_batch needs at least one part"))?
            .shape;
        let mut s = 0;
        for p in &parts {
            let sh = p.shape;
            if (sh.f, sh.x, sh.y, sh.z) != (first.f, first.x, first.y, first.z) {
                return Err(invalid!("concat_batch shape mismatch {first:?} vs {sh:?}"));
            }
            s += sh.s;
        }
        let mut data = Vec::with_capacity(s * first.f * first.image_len());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor5 {
            shape: first.with_batch(s)?,
            data,
        })
    }

    pub fn map(mut self, f: impl Fn(T) -> T) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }

    pub fn cast<U: Real>(&self) -> Tensor5<U> {
        Tensor5 {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Copies the box `src[src_off .. src_off + extent]` into `dst[dst_off ..]`,
/// both images row-major with z fastest.
pub(crate) fn copy_box<T: Copy>(
    src: &[T],
    src_dims: [usize; 3],
    src_off: [usize; 3],
    extent: [usize; 3],
    dst: &mut [T],
    dst_dims: [usize; 3],
    dst_off: [usize; 3],
) {
    for i in 0..extent[0] {
        for j in 0..extent[1] {
            let s = ((src_off[0] + i) * src_dims[1] + src_off[1] + j) * src_dims[2] + src_off[2];
            let d = ((dst_off[0] + i) * dst_dims[1] + dst_off[1] + j) * dst_dims[2] + dst_off[2];
            dst[d..d + extent[2]].copy_from_slice(&src[s..s + extent[2]]);
        }
    }
}

/// Largest absolute difference divided by the largest magnitude of `expected`.
pub fn max_relative_error<T: Real>(actual: &[T], expected: &[T]) -> f64 {
    assert_eq!(actual.len(), expected.len(), "length mismatch");
    let scale = expected
        .iter()
        .fold(0.0f64, |m, v| m.max(v.as_f64().abs()))
        .max(f64::MIN_POSITIVE);
    let diff = actual
        .iter()
        .zip(expected)
        .fold(0.0f64, |m, (a, e)| m.max((a.as_f64() - e.as_f64()).abs()));
    diff / scale
}

/// Complex counterpart of [`max_relative_error`].
pub fn max_relative_error_complex<T: Real>(actual: &[Complex<T>], expected: &[Complex<T>]) -> f64 {
    assert_eq!(actual.len(), expected.len(), "length mismatch");
    let scale = expected
        .iter()
        .fold(0.0f64, |m, v| m.max(v.norm().as_f64()))
        .max(f64::MIN_POSITIVE);
    let diff = actual
        .iter()
        .zip(expected)
        .fold(0.0f64, |m, (a, e)| m.max((*a - *e).norm().as_f64()));
    diff / scale
}

/// Logical axis carried by a storage axis of a [`ComplexTensor`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Batch,
    Feature,
    X,
    Y,
    Z,
}

/// Dense complex tensor with an explicit storage layout.
///
/// `halved` marks a half-spectrum: the named axis holds only the
/// `⌊n/2⌋ + 1` non-redundant frequencies of a real-to-complex transform.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T> {
    dims: Vec<usize>,
    axes: Vec<Axis>,
    halved: Option<Axis>,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexTensor<T> {
    pub fn new(dims: Vec<usize>, axes: Vec<Axis>, data: Vec<Complex<T>>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 5 {
            return Err(invalid!("complex tensor rank must be 1..=5, got {}", dims.len()));
        }
        if axes.len() != dims.len() {
            return Err(invalid!("{} axis tags for {} dims", axes.len(), dims.len()));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return Err(invalid!("axis {a:?} appears twice in layout {axes:?}"));
            }
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(invalid!("data length {} does not match dims {dims:?}", data.len()));
        }
        Ok(ComplexTensor {
            dims,
            axes,
            halved: None,
            data,
        })
    }

    pub fn zeros(dims: Vec<usize>, axes: Vec<Axis>) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, axes, vec![Complex::new(T::zero(), T::zero()); n])
    }

    pub fn with_halved(mut self, axis: Axis) -> Result<Self> {
        if !self.axes.contains(&axis) {
            return Err(invalid!("halved axis {axis:?} not in layout {:?}", self.axes));
        }
        self.halved = Some(axis);
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn halved(&self) -> Option<Axis> {
        self.halved
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn position(&self, axis: Axis) -> Option<usize> {
        self.axes.iter().position(|a| *a == axis)
    }

    pub fn get(&self, idx: &[usize]) -> Complex<T> {
        let st = strides_of(&self.dims);
        self.data[idx.iter().zip(&st).map(|(i, s)| i * s).sum::<usize>()]
    }

    /// Moves storage axis `a` to position `sigma[a]`:
    /// `out[σ(idx)] = self[idx]`, with the layout tag permuted alongside.
    pub fn permute(&self, sigma: &[usize]) -> Result<Self> {
        check_permutation(sigma, self.dims.len())?;
        let mut dims = vec![0; sigma.len()];
        let mut axes = self.axes.clone();
        for (a, &to) in sigma.iter().enumerate() {
            dims[to] = self.dims[a];
            axes[to] = self.axes[a];
        }
        let mut data = vec![Complex::new(T::zero(), T::zero()); self.data.len()];
        permute_box(
            &self.data,
            &self.dims,
            &vec![0; sigma.len()],
            &self.dims,
            sigma,
            &mut data,
            &dims,
        );
        Ok(ComplexTensor {
            dims,
            axes,
            halved: self.halved,
            data,
        })
    }
}

/// Checks that `sigma` is a permutation of `0..rank`.
pub fn check_permutation(sigma: &[usize], rank: usize) -> Result<()> {
    if sigma.len() != rank {
        return Err(invalid!("permutation of arity {} applied to rank {rank}", sigma.len()));
    }
    let mut seen = [false; 8];
    for &s in sigma {
        if s >= rank || seen[s] {
            return Err(invalid!("{sigma:?} is not a permutation of 0..{rank}"));
        }
        seen[s] = true;
    }
    Ok(())
}

pub fn inverse_permutation(sigma: &[usize]) -> Result<Vec<usize>> {
    check_permutation(sigma, sigma.len())?;
    let mut inv = vec![0; sigma.len()];
    for (a, &s) in sigma.iter().enumerate() {
        inv[s] = a;
    }
    Ok(inv)
}

/// Copies the box `src[offset .. offset + extent]` into `dst`, moving source
/// axis `a` to destination axis `sigma[a]`. The box lands at the origin of
/// `dst`; elements of `dst` outside the box are left untouched.
pub(crate) fn permute_box<E: Copy>(
    src: &[E],
    src_dims: &[usize],
    offset: &[usize],
    extent: &[usize],
    sigma: &[usize],
    dst: &mut [E],
    dst_dims: &[usize],
) {
    let rank = src_dims.len();
    debug_assert!(rank <= 5 && extent.iter().all(|&e| e > 0));
    let ss = strides_of(src_dims);
    let ds = strides_of(dst_dims);
    // destination stride of each source axis
    let mut dsa = [0usize; 5];
    for a in 0..rank {
        dsa[a] = ds[sigma[a]];
    }
    let last = rank - 1;
    let mut idx = [0usize; 5];
    loop {
        let mut so = 0;
        let mut d0 = 0;
        for a in 0..last {
            so += (offset[a] + idx[a]) * ss[a];
            d0 += idx[a] * dsa[a];
        }
        so += offset[last];
        let step = dsa[last];
        for (t, v) in src[so..so + extent[last]].iter().enumerate() {
            dst[d0 + t * step] = *v;
        }
        // odometer over the leading axes
        let mut a = last;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < extent[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}
