//! Many images at once, half-spectrum along z, permuted layout.
//!
//! Forward: z-lines into `(b, x, y, z″)`; permute to `(b, x, z″, y′)` and
//! transform y-lines; permute to `(b, z″, y′, x′)` and transform x-lines.

use alloc::vec;

use num_complex::Complex;

use super::{hermitian_extend, Crop, FftPlan3, FftWorkspace, LineScratch};
use crate::error::{invalid, Result};
use crate::parallel::Parallel;
use crate::tensor::{permute_box, Axis, ComplexTensor, Shape5, Tensor5};
use crate::Real;

/// Runs `f` on every `len`-sized line of `data`, in sub-batches bounded by
/// the workspace's overhead cap for transforms of length `transform`.
#[allow(clippy::too_many_arguments)]
fn run_lines<T: Real, P: Parallel>(
    data: &mut [Complex<T>],
    len: usize,
    transform: usize,
    ws: &mut FftWorkspace<'_, T>,
    scratch: &mut [LineScratch<T>],
    par: &P,
    f: impl Fn(&mut LineScratch<T>, usize, &mut [Complex<T>]) + Sync,
) -> Result<()> {
    let limit = ws.sub_batch_limit(transform)?;
    for (g, group) in data.chunks_mut(limit * len).enumerate() {
        ws.record(group.len() / len);
        let first = g * limit;
        par.for_each_chunk(group, len, scratch, |w, i, line| f(w, first + i, line));
    }
    Ok(())
}

/// Transforms `b` images of extent `img` (contiguous in `input`) into `out`,
/// laid out `(b, z″, y′, x′)` with `z″ = z′/2 + 1`.
pub fn batched_forward_into<T: Real, P: Parallel>(
    plan: &FftPlan3<T>,
    input: &[T],
    img: [usize; 3],
    b: usize,
    out: &mut [Complex<T>],
    ws: &mut FftWorkspace<'_, T>,
    par: &P,
) -> Result<()> {
    plan.check_image(img)?;
    let [nx, ny, nz] = img;
    let [px, py, pz] = plan.padded();
    let hz = pz / 2 + 1;
    if b == 0 || input.len() != b * nx * ny * nz || out.len() != b * plan.batched_len() {
        return Err(invalid!("buffer lengths do not match {b} images of {img:?} / plan {:?}", plan.padded()));
    }
    let inter = b * nx * hz * py;
    ws.require(inter)?;
    let zero = Complex::new(T::zero(), T::zero());
    let mut scratch = plan.line_scratch(par.workers());

    let lz = plan.line(2);
    let stage1 = &mut out[..b * nx * ny * hz];
    run_lines(stage1, hz, pz, ws, &mut scratch, par, |w, i, line| {
        let src = &input[i * nz..(i + 1) * nz];
        let buf = &mut w.buf[..pz];
        for (k, v) in buf.iter_mut().enumerate() {
            *v = if k < nz { Complex::new(src[k], T::zero()) } else { zero };
        }
        lz.forward(buf, &mut w.tmp);
        line.copy_from_slice(&buf[..hz]);
    })?;

    let ly = plan.line(1);
    let dims1 = [b, nx, ny, hz];
    let dims2 = [b, nx, hz, py];
    let ws_scratch = core::mem::take(&mut ws.scratch);
    let inter_buf = &mut ws_scratch[..inter];
    inter_buf.fill(zero);
    permute_box(&out[..b * nx * ny * hz], &dims1, &[0; 4], &dims1, &[0, 1, 3, 2], inter_buf, &dims2);
    let res = run_lines(inter_buf, py, py, ws, &mut scratch, par, |w, _, line| ly.forward(line, &mut w.tmp));
    if let Err(e) = res {
        ws.scratch = ws_scratch;
        return Err(e);
    }

    let lx = plan.line(0);
    let dims3 = [b, hz, py, px];
    out.fill(zero);
    permute_box(&ws_scratch[..inter], &dims2, &[0; 4], &dims2, &[0, 3, 1, 2], out, &dims3);
    ws.scratch = ws_scratch;
    run_lines(out, px, px, ws, &mut scratch, par, |w, _, line| lx.forward(line, &mut w.tmp))
}

/// Inverse of [`batched_forward_into`]: writes `b` cropped images
/// (row-major `crop.extent`) to `out`. `spec` is used as working storage.
pub fn batched_inverse_into<T: Real, P: Parallel>(
    plan: &FftPlan3<T>,
    spec: &mut [Complex<T>],
    b: usize,
    crop: Crop,
    out: &mut [T],
    ws: &mut FftWorkspace<'_, T>,
    par: &P,
) -> Result<()> {
    plan.check_crop(crop)?;
    let [px, py, pz] = plan.padded();
    let hz = pz / 2 + 1;
    if b == 0 || spec.len() != b * plan.batched_len() || out.len() != b * crop.len() {
        return Err(invalid!("buffer lengths do not match {b} spectra / crop {crop:?}"));
    }
    let [ox, oy, oz] = crop.offset;
    let [ex, ey, ez] = crop.extent;
    let inter = b * ex * hz * py;
    ws.require(inter)?;
    let mut scratch = plan.line_scratch(par.workers());

    let lx = plan.line(0);
    run_lines(spec, px, px, ws, &mut scratch, par, |w, _, line| lx.inverse(line, &mut w.tmp))?;

    let ly = plan.line(1);
    let dims3 = [b, hz, py, px];
    let dims2 = [b, ex, hz, py];
    let ws_scratch = core::mem::take(&mut ws.scratch);
    permute_box(spec, &dims3, &[0, 0, 0, ox], &[b, hz, py, ex], &[0, 2, 3, 1], &mut ws_scratch[..inter], &dims2);
    let res = run_lines(&mut ws_scratch[..inter], py, py, ws, &mut scratch, par, |w, _, line| {
        ly.inverse(line, &mut w.tmp)
    });
    if let Err(e) = res {
        ws.scratch = ws_scratch;
        return Err(e);
    }
    let dims1 = [b, ex, ey, hz];
    permute_box(&ws_scratch[..inter], &dims2, &[0, 0, 0, oy], &[b, ex, hz, ey], &[0, 1, 3, 2], spec, &dims1);
    ws.scratch = ws_scratch;

    let lz = plan.line(2);
    let scale = T::from_f64(1.0 / plan.volume() as f64);
    let spec = &*spec;
    let limit = ws.sub_batch_limit(pz)?;
    for (g, group) in out.chunks_mut(limit * ez).enumerate() {
        ws.record(group.len() / ez);
        let first = g * limit;
        par.for_each_chunk(group, ez, &mut scratch, |w, i, line| {
            let l = first + i;
            let buf = &mut w.buf[..pz];
            buf[..hz].copy_from_slice(&spec[l * hz..(l + 1) * hz]);
            hermitian_extend(buf);
            lz.inverse(buf, &mut w.tmp);
            for (o, v) in line.iter_mut().zip(&buf[oz..oz + ez]) {
                *o = v.re * scale;
            }
        });
    }
    Ok(())
}

/// Batched transform of every image of `imgs` (`b = s·f`).
pub fn batched_fft_forward<T: Real, P: Parallel>(
    imgs: &Tensor5<T>,
    plan: &FftPlan3<T>,
    ws: &mut FftWorkspace<'_, T>,
    par: &P,
) -> Result<ComplexTensor<T>> {
    let sh = imgs.shape();
    let b = sh.s * sh.f;
    let [px, py, pz] = plan.padded();
    let mut out = vec![Complex::new(T::zero(), T::zero()); b * plan.batched_len()];
    batched_forward_into(plan, imgs.data(), sh.spatial(), b, &mut out, ws, par)?;
    ComplexTensor::new(vec![b, pz / 2 + 1, py, px], vec![Axis::Batch, Axis::Z, Axis::Y, Axis::X], out)?
        .with_halved(Axis::Z)
}

/// Inverse of [`batched_fft_forward`]; returns a `(b, 1, crop)` tensor.
pub fn batched_fft_inverse<T: Real, P: Parallel>(
    spec: ComplexTensor<T>,
    crop: impl Into<Crop>,
    plan: &FftPlan3<T>,
    ws: &mut FftWorkspace<'_, T>,
    par: &P,
) -> Result<Tensor5<T>> {
    let crop = crop.into();
    let [px, py, pz] = plan.padded();
    let b = spec.dims()[0];
    if spec.dims() != [b, pz / 2 + 1, py, px]
        || spec.axes() != [Axis::Batch, Axis::Z, Axis::Y, Axis::X]
        || spec.halved() != Some(Axis::Z)
    {
        return Err(invalid!(
            "spectrum {:?}/{:?} is not a batched half-spectrum for padded {:?}",
            spec.dims(),
            spec.axes(),
            plan.padded()
        ));
    }
    let mut data = spec.into_data();
    let mut out = Tensor5::zeros(Shape5::from_spatial(b, 1, crop.extent)?);
    batched_inverse_into(plan, &mut data, b, crop, out.data_mut(), ws, par)?;
    Ok(out)
}
