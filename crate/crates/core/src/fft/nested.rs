//! Single-image transform, half-spectrum along x.

use alloc::vec;

use num_complex::Complex;

use super::{hermitian_extend, Crop, FftPlan3};
use crate::error::{invalid, Result};
use crate::parallel::Parallel;
use crate::tensor::{Axis, ComplexTensor, Shape5, Tensor5};
use crate::Real;

/// Transforms one `dims` image (row-major, z fastest) zero-padded to the
/// plan's extent into `out`, laid out `(x′/2+1, y′, z′)`.
///
/// Lines along x: `y·z`; along y: `(x′/2+1)·z`; along z: `(x′/2+1)·y′`.
pub fn nested_forward_into<T: Real, P: Parallel>(
    plan: &FftPlan3<T>,
    img: &[T],
    dims: [usize; 3],
    out: &mut [Complex<T>],
    par: &P,
) -> Result<()> {
    plan.check_image(dims)?;
    let [nx, ny, nz] = dims;
    let [_, py, pz] = plan.padded();
    let hx = plan.padded()[0] / 2 + 1;
    if img.len() != nx * ny * nz || out.len() != plan.nested_len() {
        return Err(invalid!("buffer lengths do not match image {dims:?} / plan {:?}", plan.padded()));
    }
    let zero = Complex::new(T::zero(), T::zero());
    out.fill(zero);
    let mut scratch = plan.line_scratch(par.workers());

    let lx = plan.line(0);
    let w = &mut scratch[0];
    for yy in 0..ny {
        for zz in 0..nz {
            let buf = &mut w.buf[..lx.len()];
            for (xx, b) in buf.iter_mut().enumerate() {
                *b = if xx < nx {
                    Complex::new(img[(xx * ny + yy) * nz + zz], T::zero())
                } else {
                    zero
                };
            }
            lx.forward(buf, &mut w.tmp);
            for (i, b) in buf.iter().take(hx).enumerate() {
                out[(i * py + yy) * pz + zz] = *b;
            }
        }
    }

    let (ly, lz) = (plan.line(1), plan.line(2));
    par.for_each_chunk(out, py * pz, &mut scratch, |w, _, plane| {
        for zz in 0..nz {
            let buf = &mut w.buf[..py];
            for (yy, b) in buf.iter_mut().enumerate() {
                *b = plane[yy * pz + zz];
            }
            ly.forward(buf, &mut w.tmp);
            for (yy, b) in buf.iter().enumerate() {
                plane[yy * pz + zz] = *b;
            }
        }
        for line in plane.chunks_mut(pz) {
            lz.forward(line, &mut w.tmp);
        }
    });
    Ok(())
}

/// Inverse of [`nested_forward_into`], writing only `crop` into `out`
/// (row-major `crop.extent`). `spec` is used as working storage.
pub fn nested_inverse_into<T: Real, P: Parallel>(
    plan: &FftPlan3<T>,
    spec: &mut [Complex<T>],
    crop: Crop,
    out: &mut [T],
    par: &P,
) -> Result<()> {
    plan.check_crop(crop)?;
    let [px, py, pz] = plan.padded();
    let hx = px / 2 + 1;
    if spec.len() != plan.nested_len() || out.len() != crop.len() {
        return Err(invalid!("buffer lengths do not match plan {:?} / crop {crop:?}", plan.padded()));
    }
    let [ox, oy, oz] = crop.offset;
    let [ex, ey, ez] = crop.extent;
    let mut scratch = plan.line_scratch(par.workers());

    let (ly, lz) = (plan.line(1), plan.line(2));
    par.for_each_chunk(spec, py * pz, &mut scratch, |w, _, plane| {
        for line in plane.chunks_mut(pz) {
            lz.inverse(line, &mut w.tmp);
        }
        for zz in oz..oz + ez {
            let buf = &mut w.buf[..py];
            for (yy, b) in buf.iter_mut().enumerate() {
                *b = plane[yy * pz + zz];
            }
            ly.inverse(buf, &mut w.tmp);
            for (yy, b) in buf.iter().enumerate() {
                plane[yy * pz + zz] = *b;
            }
        }
    });

    let lx = plan.line(0);
    let scale = T::from_f64(1.0 / plan.volume() as f64);
    let w = &mut scratch[0];
    for yy in 0..ey {
        for zz in 0..ez {
            let buf = &mut w.buf[..px];
            for (i, b) in buf.iter_mut().take(hx).enumerate() {
                *b = spec[(i * py + oy + yy) * pz + oz + zz];
            }
            hermitian_extend(buf);
            lx.inverse(buf, &mut w.tmp);
            for xx in 0..ex {
                out[(xx * ey + yy) * ez + zz] = buf[ox + xx].re * scale;
            }
        }
    }
    Ok(())
}

/// Half-spectrum (along x) of one image zero-padded to `plan.padded()`.
pub fn pruned_fft_forward<T: Real, P: Parallel>(
    img: &[T],
    dims: [usize; 3],
    plan: &FftPlan3<T>,
    par: &P,
) -> Result<ComplexTensor<T>> {
    let [px, py, pz] = plan.padded();
    let mut out = vec![Complex::new(T::zero(), T::zero()); plan.nested_len()];
    nested_forward_into(plan, img, dims, &mut out, par)?;
    ComplexTensor::new(vec![px / 2 + 1, py, pz], vec![Axis::X, Axis::Y, Axis::Z], out)?
        .with_halved(Axis::X)
}

/// Real inverse of a nested half-spectrum, cropped; returns a `(1, 1, crop)` tensor.
pub fn pruned_fft_inverse<T: Real, P: Parallel>(
    spec: ComplexTensor<T>,
    crop: impl Into<Crop>,
    plan: &FftPlan3<T>,
    par: &P,
) -> Result<Tensor5<T>> {
    let crop = crop.into();
    let [px, py, pz] = plan.padded();
    if spec.dims() != [px / 2 + 1, py, pz]
        || spec.axes() != [Axis::X, Axis::Y, Axis::Z]
        || spec.halved() != Some(Axis::X)
    {
        return Err(invalid!(
            "spectrum {:?}/{:?} is not a nested half-spectrum for padded {:?}",
            spec.dims(),
            spec.axes(),
            plan.padded()
        ));
    }
    let mut data = spec.into_data();
    let shape = Shape5::from_spatial(1, 1, crop.extent)?;
    let mut out = Tensor5::zeros(shape);
    nested_inverse_into(plan, &mut data, crop, out.data_mut(), par)?;
    Ok(out)
}
