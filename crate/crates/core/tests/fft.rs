mod common;

use rand::Rng;
use swconv_core::fft::*;
use swconv_core::oracle::{dense_dft3, dense_dft3_unseparated, dense_idft3};
use swconv_core::parallel::{Parallel, Serial, Threads};
use swconv_core::tensor::{max_relative_error, max_relative_error_complex};
use swconv_core::{Axis, Complex, ComplexTensor, Shape5, Tensor5};

fn random_image(seed: u64, dims: [usize; 3]) -> Vec<f64> {
    let mut rng = common::rng(seed);
    (0..dims.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn plan(padded: [usize; 3]) -> FftPlan3<f64> {
    FftPlan3::new(padded, &RadixProfile::smooth13(), Engine::MixedRadix).unwrap()
}

/// Nested half-spectrum entry (i, y, z) from a full spectrum.
fn half_x(full: &[Complex<f64>], p: [usize; 3]) -> Vec<Complex<f64>> {
    let hx = p[0] / 2 + 1;
    let mut out = Vec::new();
    for i in 0..hx {
        for y in 0..p[1] {
            for z in 0..p[2] {
                out.push(full[(i * p[1] + y) * p[2] + z]);
            }
        }
    }
    out
}

/// Batched layout (z″, y′, x′) from a full spectrum.
fn half_z_permuted(full: &[Complex<f64>], p: [usize; 3]) -> Vec<Complex<f64>> {
    let hz = p[2] / 2 + 1;
    let mut out = Vec::new();
    for z in 0..hz {
        for y in 0..p[1] {
            for x in 0..p[0] {
                out.push(full[(x * p[1] + y) * p[2] + z]);
            }
        }
    }
    out
}

#[test]
fn separable_oracle_matches_triple_sum() {
    let dims = [3, 2, 4];
    let img = random_image(1, dims);
    let full: Vec<_> = img.iter().map(|v| Complex::new(*v, 0.0)).collect();
    let a = dense_dft3(&img, dims, dims);
    let b = dense_dft3_unseparated(&full, dims);
    assert!(max_relative_error_complex(&a, &b) < 1e-13);
}

#[test]
fn delta_spectrum_is_all_ones() {
    let p = plan([4; 3]);
    let spec = pruned_fft_forward(&[1.0], [1; 3], &p, &Serial).unwrap();
    assert_eq!(spec.dims(), &[3, 4, 4]);
    assert_eq!(spec.halved(), Some(Axis::X));
    for v in spec.data() {
        assert!((v - Complex::new(1.0, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn zero_image_has_zero_spectrum() {
    let p = plan([8; 3]);
    let spec = pruned_fft_forward(&[0.0; 8], [2; 3], &p, &Serial).unwrap();
    assert!(spec.data().iter().all(|v| v.norm() == 0.0));
}

#[test]
fn nested_matches_dense_oracle() {
    let dims = [3; 3];
    let img = random_image(2, dims);
    let p = plan([8; 3]);
    let spec = pruned_fft_forward(&img, dims, &p, &Serial).unwrap();
    let want = half_x(&dense_dft3(&img, dims, [8; 3]), [8; 3]);
    assert!(max_relative_error_complex(spec.data(), &want) < 1e-12);
}

#[test]
fn nested_round_trip() {
    for (dims, padded) in [([3; 3], [8; 3]), ([2, 3, 5], [5, 6, 9]), ([1, 7, 2], [3, 7, 4])] {
        let img = random_image(3, dims);
        let p = plan(padded);
        let spec = pruned_fft_forward(&img, dims, &p, &Serial).unwrap();
        let back = pruned_fft_inverse(spec, dims, &p, &Serial).unwrap();
        assert!(max_relative_error(back.data(), &img) < 1e-12, "{dims:?} in {padded:?}");
    }
}

#[test]
fn all_ones_spectrum_inverts_to_delta() {
    let p = plan([4; 3]);
    let spec = ComplexTensor::new(vec![3, 4, 4], vec![Axis::X, Axis::Y, Axis::Z], vec![Complex::new(1.0, 0.0); 48])
        .unwrap()
        .with_halved(Axis::X)
        .unwrap();
    let img = pruned_fft_inverse(spec, [4; 3], &p, &Serial).unwrap();
    for (i, v) in img.data().iter().enumerate() {
        let want = if i == 0 { 1.0 } else { 0.0 };
        assert!((v - want).abs() < 1e-15);
    }
}

#[test]
fn nested_inverse_matches_dense_inverse_on_hermitian_spectra() {
    // any real image has a Hermitian spectrum; invert its half with the
    // nested path and the full one with the oracle
    let padded = [6, 5, 4];
    let mut rng = common::rng(5);
    let img: Vec<f64> = (0..120).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let full = dense_dft3(&img, padded, padded);
    let want: Vec<f64> = dense_idft3(&full, padded).iter().map(|c| c.re).collect();
    let p = plan(padded);
    let spec = ComplexTensor::new(vec![4, 5, 4], vec![Axis::X, Axis::Y, Axis::Z], half_x(&full, padded))
        .unwrap()
        .with_halved(Axis::X)
        .unwrap();
    let got = pruned_fft_inverse(spec, padded, &p, &Serial).unwrap();
    assert!(max_relative_error(got.data(), &want) < 1e-12);
}

#[test]
fn cropped_inverse_with_offset() {
    let dims = [4, 5, 6];
    let img = random_image(6, dims);
    let p = plan([4, 5, 6]);
    let spec = pruned_fft_forward(&img, dims, &p, &Serial).unwrap();
    let got = pruned_fft_inverse(spec, Crop::new([1, 2, 3], [2, 3, 3]), &p, &Serial).unwrap();
    let t = Tensor5::from_vec(Shape5::from_spatial(1, 1, dims).unwrap(), img).unwrap();
    let want = t.crop([1, 2, 3], [2, 3, 3]).unwrap();
    assert!(max_relative_error(got.data(), want.data()) < 1e-12);
}

#[test]
fn inadmissible_padding_rejected() {
    assert!(FftPlan3::<f64>::new([17, 8, 8], &RadixProfile::smooth7(), Engine::MixedRadix).is_err());
    let p = plan([4; 3]);
    assert!(pruned_fft_forward(&[0.0; 125], [5; 3], &p, &Serial).is_err());
}

fn batched(imgs: &Tensor5<f64>, p: &FftPlan3<f64>, cap: usize) -> ComplexTensor<f64> {
    let sh = imgs.shape();
    let hz = p.padded()[2] / 2 + 1;
    let mut scratch = vec![Complex::default(); sh.s * sh.f * sh.x * hz * p.padded()[1]];
    let mut ws = FftWorkspace::new(&mut scratch, cap);
    batched_fft_forward(imgs, p, &mut ws, &Serial).unwrap()
}

#[test]
fn batched_deltas_are_all_ones() {
    let p = plan([4; 3]);
    let imgs = Tensor5::from_vec(Shape5::cube(2, 1, 1).unwrap(), vec![1.0, 1.0]).unwrap();
    let spec = batched(&imgs, &p, 1 << 20);
    assert_eq!(spec.dims(), &[2, 3, 4, 4]);
    assert_eq!(spec.axes(), &[Axis::Batch, Axis::Z, Axis::Y, Axis::X]);
    assert!(spec.data().iter().all(|v| (v - Complex::new(1.0, 0.0)).norm() < 1e-15));
}

#[test]
fn batched_matches_oracle_per_image_and_nested_after_permute() {
    let mut rng = common::rng(7);
    let padded = [4; 3];
    let p = plan(padded);
    let imgs = common::random_tensor(&mut rng, Shape5::cube(3, 1, 2).unwrap());
    let spec = batched(&imgs, &p, 1 << 20);
    let per = p.batched_len();
    for b in 0..3 {
        let img = imgs.image(b, 0);
        let want = half_z_permuted(&dense_dft3(img, [2; 3], padded), padded);
        assert!(max_relative_error_complex(&spec.data()[b * per..(b + 1) * per], &want) < 1e-12);
    }
    // single image: batch of one equals the single-image batched result
    let one = batched(&imgs.batch_slice(0, 1).unwrap(), &p, 1 << 20);
    assert_eq!(one.data(), &spec.data()[..per]);
    // layout-permuted to (b, x′, y′, z″) it matches the nested variant where both are defined
    let back = spec.permute(&[0, 3, 2, 1]).unwrap();
    assert_eq!(back.axes(), &[Axis::Batch, Axis::X, Axis::Y, Axis::Z]);
    let nested = pruned_fft_forward(imgs.image(1, 0), [2; 3], &p, &Serial).unwrap();
    for x in 0..3 {
        for y in 0..4 {
            for z in 0..3 {
                let d = back.get(&[1, x, y, z]) - nested.get(&[x, y, z]);
                assert!(d.norm() < 1e-12);
            }
        }
    }
}

#[test]
fn batched_round_trip_and_zero_spectrum() {
    let mut rng = common::rng(8);
    let p = plan([5, 6, 8]);
    let imgs = common::random_tensor(&mut rng, Shape5::new(2, 1, 3, 4, 5).unwrap());
    let spec = batched(&imgs, &p, 1 << 20);
    let mut scratch = vec![Complex::default(); 2 * 3 * 5 * 6];
    let mut ws = FftWorkspace::new(&mut scratch, 1 << 20);
    let back = batched_fft_inverse(spec, [3, 4, 5], &p, &mut ws, &Serial).unwrap();
    assert!(max_relative_error(back.data(), imgs.data()) < 1e-12);

    let zero = ComplexTensor::zeros(vec![2, 5, 6, 5], vec![Axis::Batch, Axis::Z, Axis::Y, Axis::X])
        .unwrap()
        .with_halved(Axis::Z)
        .unwrap();
    let out = batched_fft_inverse(zero, [3, 4, 5], &p, &mut ws, &Serial).unwrap();
    assert!(out.data().iter().all(|v| *v == 0.0));
}

#[test]
fn batched_inverse_matches_nested_inverse() {
    let mut rng = common::rng(9);
    let padded = [6, 4, 6];
    let p = plan(padded);
    let imgs = common::random_tensor(&mut rng, Shape5::new(2, 1, 4, 3, 5).unwrap());
    let spec = batched(&imgs, &p, 1 << 20);
    let crop = Crop::new([1, 0, 2], [3, 3, 3]);
    let mut scratch = vec![Complex::default(); 2 * 3 * 4 * 4];
    let mut ws = FftWorkspace::new(&mut scratch, 1 << 20);
    let got = batched_fft_inverse(spec, crop, &p, &mut ws, &Serial).unwrap();
    for b in 0..2 {
        let nspec = pruned_fft_forward(imgs.image(b, 0), [4, 3, 5], &p, &Serial).unwrap();
        let want = pruned_fft_inverse(nspec, crop, &p, &Serial).unwrap();
        assert!(max_relative_error(got.image(b, 0), want.data()) < 1e-12);
    }
}

#[test]
fn sub_batches_respect_limit() {
    let mut rng = common::rng(10);
    let p = plan([8; 3]);
    let imgs = common::random_tensor(&mut rng, Shape5::cube(2, 1, 3).unwrap());
    let big = batched(&imgs, &p, 1 << 20);
    let mut scratch = vec![Complex::default(); 2 * 3 * 5 * 8];
    // 100 scalars → at most 3 lines of length 8 at a time
    let mut ws = FftWorkspace::new(&mut scratch, 100);
    let small = batched_fft_forward(&imgs, &p, &mut ws, &Serial).unwrap();
    assert_eq!(ws.largest_sub_batch(), 3);
    assert!(ws.sub_batches() > 10);
    assert_eq!(small.data(), big.data());

    let mut tiny = vec![Complex::default(); 4];
    let mut ws = FftWorkspace::new(&mut tiny, 1 << 20);
    assert!(matches!(
        batched_fft_forward(&imgs, &p, &mut ws, &Serial),
        Err(swconv_core::Error::ResourceExhausted { .. })
    ));
    let mut ws = FftWorkspace::new(&mut scratch, 10);
    assert!(batched_fft_forward(&imgs, &p, &mut ws, &Serial).is_err());
}

#[test]
fn linearity() {
    let dims = [3, 4, 2];
    let (x, y) = (random_image(11, dims), random_image(12, dims));
    let (a, b) = (0.7, -1.3);
    let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
    let p = plan([6, 8, 5]);
    let fx = pruned_fft_forward(&x, dims, &p, &Serial).unwrap();
    let fy = pruned_fft_forward(&y, dims, &p, &Serial).unwrap();
    let fm = pruned_fft_forward(&mix, dims, &p, &Serial).unwrap();
    let want: Vec<_> = fx.data().iter().zip(fy.data()).map(|(u, v)| u * a + v * b).collect();
    assert!(max_relative_error_complex(fm.data(), &want) < 1e-10);
}

#[test]
fn parseval_with_half_spectrum_weights() {
    for padded in [[6, 5, 4], [7, 4, 6]] {
        let dims = [4, 3, 3];
        let img = random_image(13, dims);
        let p = plan(padded);
        let spec = pruned_fft_forward(&img, dims, &p, &Serial).unwrap();
        let hx = padded[0] / 2 + 1;
        let mut energy = 0.0;
        for i in 0..hx {
            // bins other than 0 and (for even length) n/2 stand for a conjugate pair
            let w = if i == 0 || (padded[0] % 2 == 0 && i == padded[0] / 2) { 1.0 } else { 2.0 };
            for j in 0..padded[1] * padded[2] {
                energy += w * spec.data()[i * padded[1] * padded[2] + j].norm_sqr();
            }
        }
        let n = p.volume() as f64;
        let direct: f64 = img.iter().map(|v| v * v).sum();
        assert!((energy / n - direct).abs() < 1e-10 * direct);
    }
}

#[test]
fn pruning_is_agnostic_to_original_extent() {
    // a 3³ image zero-extended to 5³ by hand transforms identically
    let img = random_image(14, [3; 3]);
    let t = Tensor5::from_vec(Shape5::cube(1, 1, 3).unwrap(), img.clone()).unwrap();
    let e = t.embed_zero(Shape5::cube(1, 1, 5).unwrap()).unwrap();
    let p = plan([8; 3]);
    let a = pruned_fft_forward(&img, [3; 3], &p, &Serial).unwrap();
    let b = pruned_fft_forward(e.data(), [5; 3], &p, &Serial).unwrap();
    let c = pruned_fft_forward(e.crop([0; 3], [5; 3]).unwrap().data(), [5; 3], &p, &Serial).unwrap();
    assert!(max_relative_error_complex(a.data(), b.data()) < 1e-13);
    assert_eq!(b.data(), c.data());
}

#[test]
fn worker_count_does_not_change_bits() {
    let mut rng = common::rng(15);
    let imgs = common::random_tensor(&mut rng, Shape5::cube(3, 1, 5).unwrap());
    let p = plan([8; 3]);
    let with = |threads: usize| {
        let par = Threads::new(threads);
        let nested = pruned_fft_forward(imgs.image(0, 0), [5; 3], &p, &par).unwrap().into_data();
        let mut scratch = vec![Complex::default(); 3 * 5 * 5 * 8];
        let mut ws = FftWorkspace::new(&mut scratch, 1 << 20);
        let b = batched_fft_forward(&imgs, &p, &mut ws, &par).unwrap().into_data();
        (nested, b)
    };
    let base = with(1);
    for t in [2, 3, 8] {
        assert_eq!(with(t), base);
        assert!(Threads::new(t).workers() == t);
    }
}

#[test]
fn direct_and_mixed_radix_engines_agree() {
    let dims = [5, 3, 4];
    let img = random_image(16, dims);
    let padded = [10, 7, 9];
    let fast = FftPlan3::any_size(padded, Engine::MixedRadix);
    let slow = FftPlan3::any_size(padded, Engine::Direct);
    let a = pruned_fft_forward(&img, dims, &fast, &Serial).unwrap();
    let b = pruned_fft_forward(&img, dims, &slow, &Serial).unwrap();
    assert!(max_relative_error_complex(a.data(), b.data()) < 1e-12);
}
