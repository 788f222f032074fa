mod common;

use rand::Rng;
use swconv_core::cost::{implementation_memory, transformed_len, MemoryDims, PrimitiveKind, ResourceEnv};
use swconv_core::fft::{Engine, RadixProfile};
use swconv_core::layers::task_graph::{Placement, Task, TaskGraph};
use swconv_core::layers::*;
use swconv_core::memory::{MemoryAudit, MemoryTracker};
use swconv_core::network::{LayerSpec, NetworkSpec, Weights};
use swconv_core::oracle::{conv_naive, max_pool_naive, sliding_window};
use swconv_core::parallel::{Serial, Threads};
use swconv_core::{Error, Shape5, Tensor5};

const CAP: usize = 1 << 16;

fn profile() -> RadixProfile {
    RadixProfile::smooth13_restricted()
}

/// Runs one primitive on a copy of `input`, returning its output and audit.
fn run(
    kind: PrimitiveKind,
    input: &Tensor5<f64>,
    params: &ConvLayerParams<f64>,
    workers: usize,
) -> (Tensor5<f64>, usize) {
    let mem = MemoryTracker::unlimited();
    let par = Threads::new(workers);
    let x = input.clone();
    let out = match kind {
        PrimitiveKind::DirectNaive => conv_direct(x, params, DirectVariant::Naive, &par, &mem),
        PrimitiveKind::DirectTemp => conv_direct(x, params, DirectVariant::TempBuffer, &par, &mem),
        PrimitiveKind::FftDataParallel => {
            conv_fft_data_parallel(x, params, &profile(), Engine::MixedRadix, &par, &mem)
        }
        PrimitiveKind::FftStaged => conv_fft_staged(x, params, &profile(), Engine::MixedRadix, CAP, &par, &mem),
        PrimitiveKind::FftTaskParallel => {
            conv_fft_task_parallel(x, params, &profile(), Engine::MixedRadix, &TaskPool::simulated(workers), &mem)
        }
        _ => unreachable!(),
    }
    .unwrap();
    assert_eq!(mem.current(), 0, "{kind} leaked charges");
    (out, mem.peak())
}

fn conv_kinds() -> [PrimitiveKind; 5] {
    PrimitiveKind::HOST_CONV
}

#[test]
fn scalar_kernel_scales_input() {
    let mut rng = common::rng(1);
    let input = common::random_tensor(&mut rng, Shape5::new(1, 1, 3, 4, 5).unwrap());
    let params = ConvLayerParams::from_fn(1, 1, [1; 3], Activation::Identity, || 2.0).unwrap();
    let params = ConvLayerParams::new(params.kernels().clone(), vec![0.0], Activation::Identity).unwrap();
    for kind in conv_kinds() {
        let (out, _) = run(kind, &input, &params, 1);
        let want = input.clone().map(|v| 2.0 * v);
        assert!(common::rel(&out, &want) < 1e-12, "{kind}");
    }
}

#[test]
fn delta_kernel_crops_flipped() {
    // a delta at kernel index 0 of a true convolution selects input voxel u + k − 1
    let mut rng = common::rng(2);
    let input = common::random_tensor(&mut rng, Shape5::cube(1, 1, 5).unwrap());
    let mut kernels = Tensor5::zeros(Shape5::cube(1, 1, 3).unwrap());
    kernels.data_mut()[0] = 1.0;
    let params = ConvLayerParams::new(kernels, vec![0.0], Activation::Identity).unwrap();
    let want = input.crop([2; 3], [3; 3]).unwrap();
    for kind in conv_kinds() {
        let (out, _) = run(kind, &input, &params, 2);
        assert!(common::rel(&out, &want) < 1e-12, "{kind}");
    }
}

#[test]
fn direct_matches_loop_oracle() {
    let mut rng = common::rng(3);
    let input = common::random_tensor(&mut rng, Shape5::cube(2, 3, 6).unwrap());
    let params = common::random_params(&mut rng, 2, 3, [3; 3], Activation::Identity);
    let want = conv_naive(&input, &params).unwrap();
    assert_eq!(want.shape(), Shape5::cube(2, 2, 4).unwrap());
    for kind in [PrimitiveKind::DirectNaive, PrimitiveKind::DirectTemp] {
        let (out, _) = run(kind, &input, &params, 3);
        assert!(common::rel(&out, &want) < 1e-10);
    }
}

#[test]
fn fft_variants_match_direct_on_stated_instances() {
    let cases = [
        (PrimitiveKind::FftDataParallel, 1, 2, 2, 7),
        (PrimitiveKind::FftTaskParallel, 2, 3, 4, 6),
        (PrimitiveKind::FftStaged, 2, 2, 3, 6),
    ];
    for (kind, s, f, fo, n) in cases {
        let mut rng = common::rng(4 + s as u64);
        let input = common::random_tensor(&mut rng, Shape5::cube(s, f, n).unwrap());
        let params = common::random_params(&mut rng, fo, f, [3; 3], Activation::Identity);
        let want = conv_naive(&input, &params).unwrap();
        let (out, _) = run(kind, &input, &params, 2);
        assert!(common::rel(&out, &want) < 1e-10, "{kind}");
    }
}

#[test]
fn data_parallel_single_precision() {
    let mut rng = common::rng(5);
    let input = common::random_tensor(&mut rng, Shape5::cube(1, 2, 7).unwrap());
    let params = common::random_params(&mut rng, 2, 2, [3; 3], Activation::Identity);
    let want = conv_naive(&input, &params).unwrap();
    let mem = MemoryTracker::unlimited();
    let out = conv_fft_data_parallel(
        input.cast::<f32>(),
        &params.cast::<f32>(),
        &profile(),
        Engine::MixedRadix,
        &Serial,
        &mem,
    )
    .unwrap();
    assert!(common::rel(&out.cast::<f64>(), &want) < 1e-5);
}

#[test]
fn rectified_linear_clamps() {
    let input = Tensor5::from_fn(Shape5::cube(1, 1, 4).unwrap(), |[.., x, y, z]| 1.0 + (x + y + z) as f64 / 16.0);
    let params = ConvLayerParams::from_fn(2, 1, [2; 3], Activation::Relu, || -1.0).unwrap();
    for kind in conv_kinds() {
        let (out, _) = run(kind, &input, &params, 2);
        assert!(out.data().iter().all(|v| *v == 0.0), "{kind}");
    }
}

#[test]
fn primitives_agree_on_random_instances() {
    let mut rng = common::rng(6);
    for trial in 0..12 {
        let s = rng.gen_range(1..=2);
        let f = rng.gen_range(1..=4);
        let fo = rng.gen_range(1..=4);
        let n = [0; 3].map(|_| rng.gen_range(5..=10));
        let k = [0; 3].map(|_| rng.gen_range(1..=5));
        let act = if trial % 2 == 0 { Activation::Identity } else { Activation::Relu };
        let input = common::random_tensor(&mut rng, Shape5::from_spatial(s, f, n).unwrap());
        let params = common::random_params(&mut rng, fo, f, k, act);
        let (base, _) = run(PrimitiveKind::DirectNaive, &input, &params, 1);
        for kind in conv_kinds() {
            let (out, _) = run(kind, &input, &params, 1 + trial % 3);
            assert!(common::rel(&out, &base) < 1e-10, "{kind} on {s} {f} {fo} {n:?} {k:?}");
        }
    }
}

#[test]
fn linear_in_the_input() {
    let mut rng = common::rng(7);
    let sh = Shape5::cube(2, 2, 6).unwrap();
    let (x, y) = (common::random_tensor(&mut rng, sh), common::random_tensor(&mut rng, sh));
    let params = ConvLayerParams::from_fn(3, 2, [3; 3], Activation::Identity, || rng.gen_range(-1.0..1.0)).unwrap();
    let params = ConvLayerParams::new(params.kernels().clone(), vec![0.0; 3], Activation::Identity).unwrap();
    let (a, b) = (1.5, -0.25);
    let mix = Tensor5::from_vec(sh, x.data().iter().zip(y.data()).map(|(u, v)| a * u + b * v).collect()).unwrap();
    for kind in conv_kinds() {
        let (ox, _) = run(kind, &x, &params, 2);
        let (oy, _) = run(kind, &y, &params, 2);
        let (om, _) = run(kind, &mix, &params, 2);
        let want = Tensor5::from_vec(ox.shape(), ox.data().iter().zip(oy.data()).map(|(u, v)| a * u + b * v).collect())
            .unwrap();
        assert!(common::rel(&om, &want) < 1e-10, "{kind}");
    }
}

fn memory_model(kind: PrimitiveKind, s: usize, f: usize, fo: usize, n: usize, k: usize, workers: usize) -> f64 {
    let dims = MemoryDims {
        s: s as f64,
        f: f as f64,
        f_out: fo as f64,
        n: (n * n * n) as f64,
        n_out: ((n - k + 1).pow(3)) as f64,
        nt: transformed_len(kind, [n; 3], &profile()) as f64,
    };
    let env = ResourceEnv::new(workers, usize::MAX, CAP).unwrap();
    implementation_memory(kind, &dims, &env)
}

#[test]
fn memory_audits_within_band() {
    let mut rng = common::rng(8);
    for (s, f, fo, n, k, workers) in [(1, 4, 6, 9, 3, 2), (2, 6, 4, 8, 5, 4), (2, 8, 8, 10, 3, 3), (1, 6, 8, 7, 2, 8)] {
        let input = common::random_tensor(&mut rng, Shape5::cube(s, f, n).unwrap());
        let params = common::random_params(&mut rng, fo, f, [k; 3], Activation::Identity);
        for kind in conv_kinds() {
            let (_, peak) = run(kind, &input, &params, workers);
            let audit = MemoryAudit { peak, model: memory_model(kind, s, f, fo, n, k, workers) };
            assert!(peak > 0);
            let r = audit.ratio();
            assert!((0.5..=1.15).contains(&r), "{kind} (S={s} f={f} f'={fo} n={n}): ratio {r}");
        }
    }
}

#[test]
fn staged_peak_below_sum_of_stages() {
    let mut rng = common::rng(9);
    let (s, f, fo, n) = (2, 3, 4, 8);
    let input = common::random_tensor(&mut rng, Shape5::cube(s, f, n).unwrap());
    let params = common::random_params(&mut rng, fo, f, [3; 3], Activation::Identity);
    let (_, peak) = run(PrimitiveKind::FftStaged, &input, &params, 1);
    let nt = transformed_len(PrimitiveKind::FftStaged, [n; 3], &profile()) as f64;
    let (s, f, fo) = (s as f64, f as f64, fo as f64);
    let (nv, no) = (512.0, 216.0);
    let stages = [
        s * f * (nv + nt) + f * nt,
        s * (f + fo) * nt + 2.0 * f * nt,
        s * fo * (no + nt) + fo * nt,
    ];
    let max = stages.iter().cloned().fold(0.0, f64::max) + CAP as f64;
    assert!((peak as f64) < stages.iter().sum::<f64>() + CAP as f64);
    let r = peak as f64 / max;
    assert!((0.85..=1.15).contains(&r), "ratio {r}");
}

#[test]
fn staged_rejects_tiny_overhead_cap() {
    let mut rng = common::rng(10);
    let input = common::random_tensor(&mut rng, Shape5::cube(1, 1, 8).unwrap());
    let params = common::random_params(&mut rng, 1, 1, [3; 3], Activation::Identity);
    let mem = MemoryTracker::unlimited();
    let r = conv_fft_staged(input, &params, &profile(), Engine::MixedRadix, 8, &Serial, &mem);
    assert!(matches!(r, Err(Error::ResourceExhausted { .. })));
}

#[test]
fn capacity_limit_is_enforced() {
    let mut rng = common::rng(11);
    let input = common::random_tensor(&mut rng, Shape5::cube(1, 2, 8).unwrap());
    let params = common::random_params(&mut rng, 2, 2, [3; 3], Activation::Identity);
    let mem = MemoryTracker::with_capacity(2000);
    let r = conv_fft_data_parallel(input, &params, &profile(), Engine::MixedRadix, &Serial, &mem);
    assert!(matches!(r, Err(Error::ResourceExhausted { .. })));
    assert_eq!(mem.current(), 0);
}

#[test]
fn kernel_larger_than_image_rejected() {
    let input = Tensor5::<f64>::zeros(Shape5::cube(1, 1, 3).unwrap());
    let params = ConvLayerParams::from_fn(1, 1, [4; 3], Activation::Identity, || 1.0).unwrap();
    let mem = MemoryTracker::unlimited();
    assert!(matches!(
        conv_direct(input, &params, DirectVariant::Naive, &Serial, &mem),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn nan_input_rejected() {
    let mut input = Tensor5::<f64>::zeros(Shape5::cube(1, 1, 3).unwrap());
    input.data_mut()[4] = f64::NAN;
    let mem = MemoryTracker::unlimited();
    assert!(max_pool(input, [1; 3], &Serial, &mem).is_err());
}

#[test]
fn task_graph_counts_for_four_by_five() {
    let g = TaskGraph::new(4, 4, 5).unwrap();
    let count = |pred: fn(&Task) -> bool| g.count(pred);
    assert_eq!(count(|t| matches!(t, Task::InputTransform { .. })), 16);
    assert_eq!(count(|t| matches!(t, Task::KernelTransform { .. })), 20);
    assert_eq!(count(|t| matches!(t, Task::MultiplyAdd { .. })), 80);
    assert_eq!(count(|t| matches!(t, Task::OutputTransform { .. })), 20);
    assert_eq!(count(|t| matches!(t, Task::Sync(_))), 4);
    assert_eq!(g.topological_order().unwrap().len(), g.len());
    // priorities strictly decrease along every edge
    for (a, b) in g.edges() {
        assert!(g.priority(a) > g.priority(b));
    }
}

#[test]
fn task_parallel_trace_respects_placement() {
    let mut rng = common::rng(12);
    let input = common::random_tensor(&mut rng, Shape5::cube(2, 3, 6).unwrap());
    let params = common::random_params(&mut rng, 4, 3, [3; 3], Activation::Identity);
    let mem = MemoryTracker::unlimited();
    let pool = TaskPool::new(6, 2, TaskRunner::Simulated);
    let (_, graph, trace) =
        conv_fft_task_parallel_traced(input, &params, &profile(), Engine::MixedRadix, &pool, &mem).unwrap();
    assert_eq!(trace.len(), graph.len());
    let placement = Placement::new(6, 2, 4).unwrap();
    let mut owner = [None; 4];
    for e in &trace {
        if let Task::KernelTransform { output, .. } = graph.task(e.task) {
            let buf = placement.buffer_of(e.worker).expect("kernel transform on a non-primary worker");
            owner[output] = Some(placement.group(e.worker));
            assert_eq!(e.buffer, Some(buf));
        }
    }
    for e in &trace {
        if let Task::MultiplyAdd { output, .. } = graph.task(e.task) {
            assert_eq!(Some(placement.group(e.worker)), owner[output]);
        }
    }
}

#[test]
fn task_parallel_deterministic_across_workers_and_runners() {
    let mut rng = common::rng(13);
    let input = common::random_tensor(&mut rng, Shape5::cube(2, 3, 6).unwrap());
    let params = common::random_params(&mut rng, 4, 3, [3; 3], Activation::Relu);
    let go = |pool: TaskPool| {
        let mem = MemoryTracker::unlimited();
        conv_fft_task_parallel(input.clone(), &params, &profile(), Engine::MixedRadix, &pool, &mem).unwrap()
    };
    let base = go(TaskPool::simulated(1));
    for w in [2, 8] {
        assert_eq!(go(TaskPool::simulated(w)).data(), base.data());
        assert_eq!(go(TaskPool::new(w, 1, TaskRunner::Threads)).data(), base.data());
        assert_eq!(go(TaskPool::new(w, 2, TaskRunner::Threads)).data(), base.data());
    }
    let mem = MemoryTracker::unlimited();
    assert!(conv_fft_task_parallel(input, &params, &profile(), Engine::MixedRadix, &TaskPool::simulated(0), &mem).is_err());
}

#[test]
fn other_primitives_are_deterministic_across_workers() {
    let mut rng = common::rng(14);
    let input = common::random_tensor(&mut rng, Shape5::cube(2, 3, 7).unwrap());
    let params = common::random_params(&mut rng, 3, 3, [2; 3], Activation::Identity);
    for kind in [PrimitiveKind::DirectNaive, PrimitiveKind::DirectTemp, PrimitiveKind::FftDataParallel, PrimitiveKind::FftStaged] {
        let base = run(kind, &input, &params, 1).0;
        for w in [2, 8] {
            assert_eq!(run(kind, &input, &params, w).0.data(), base.data(), "{kind}");
        }
    }
}

fn line(values: &[f64]) -> Tensor5<f64> {
    Tensor5::from_vec(Shape5::new(1, 1, 1, 1, values.len()).unwrap(), values.to_vec()).unwrap()
}

#[test]
fn max_pool_examples() {
    let mem = MemoryTracker::unlimited();
    let out = max_pool(line(&[1.0, 5.0, 3.0, 2.0, 9.0, 0.0]), [1, 1, 2], &Serial, &mem).unwrap();
    assert_eq!(out.data(), &[5.0, 3.0, 9.0]);

    let mut rng = common::rng(15);
    let x = common::random_tensor(&mut rng, Shape5::cube(2, 2, 6).unwrap());
    let out = max_pool(x.clone(), [2; 3], &Serial, &mem).unwrap();
    assert_eq!(out.shape(), Shape5::cube(2, 2, 3).unwrap());
    assert_eq!(out.data(), max_pool_naive(&x, [2; 3]).unwrap().data());

    let c = Tensor5::from_fn(Shape5::cube(1, 1, 4).unwrap(), |_| 3.5);
    assert!(max_pool(c, [2; 3], &Serial, &mem).unwrap().data().iter().all(|v| *v == 3.5));

    assert!(max_pool(Tensor5::<f64>::zeros(Shape5::cube(1, 1, 5).unwrap()), [2; 3], &Serial, &mem).is_err());
}

#[test]
fn mpf_examples() {
    let mem = MemoryTracker::unlimited();
    let out = mpf_pool(line(&[1.0, 5.0, 3.0, 2.0, 9.0]), [1, 1, 2], &Serial, &mem).unwrap();
    assert_eq!(out.shape(), Shape5::new(2, 1, 1, 1, 2).unwrap());
    assert_eq!(out.data(), &[5.0, 3.0, 5.0, 9.0]);

    let mut rng = common::rng(16);
    let x = common::random_tensor(&mut rng, Shape5::cube(1, 2, 5).unwrap());
    let out = mpf_pool(x.clone(), [2; 3], &Serial, &mem).unwrap();
    assert_eq!(out.shape(), Shape5::new(8, 2, 2, 2, 2).unwrap());
    // fragment o equals plain pooling of the input shifted by o
    for o in 0..8 {
        let off = [o / 4, (o / 2) % 2, o % 2];
        let shifted = x.crop(off, [4; 3]).unwrap();
        let want = max_pool_naive(&shifted, [2; 3]).unwrap();
        assert_eq!(out.batch_slice(o, 1).unwrap().data(), want.data());
    }

    let id = mpf_pool(x.clone(), [1; 3], &Serial, &mem).unwrap();
    assert_eq!(id.data(), x.data());
    assert!(mpf_pool(Tensor5::<f64>::zeros(Shape5::cube(1, 1, 4).unwrap()), [2; 3], &Serial, &mem).is_err());
}

#[test]
fn recombine_examples() {
    let frags = Tensor5::from_vec(Shape5::new(2, 1, 1, 1, 2).unwrap(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let dense = recombine_fragments(&frags, &[[1, 1, 2]]).unwrap();
    assert_eq!(dense.data(), &[1.0, 3.0, 2.0, 4.0]);

    let mut rng = common::rng(17);
    let x = common::random_tensor(&mut rng, Shape5::cube(2, 2, 3).unwrap());
    assert_eq!(recombine_fragments(&x, &[]).unwrap().data(), x.data());
    assert!(recombine_fragments(&x, &[[2, 1, 1]; 2]).is_err());
}

/// Dense max filter with stride one: output extent n − p + 1.
fn max_filter(x: &Tensor5<f64>, p: [usize; 3]) -> Tensor5<f64> {
    let sh = x.shape();
    let m = [0, 1, 2].map(|a| sh.spatial()[a] - p[a] + 1);
    let out_shape = Shape5::from_spatial(sh.s, sh.f, m).unwrap();
    Tensor5::from_fn(out_shape, |[s, f, a, b, c]| {
        let mut best = f64::NEG_INFINITY;
        for u in 0..p[0] {
            for v in 0..p[1] {
                for w in 0..p[2] {
                    best = best.max(x.get([s, f, a + u, b + v, c + w]));
                }
            }
        }
        best
    })
}

#[test]
fn mpf_then_recombine_is_dense_max_filter() {
    let mut rng = common::rng(18);
    let mem = MemoryTracker::unlimited();
    for (n, p) in [([5, 7, 3], [2, 2, 1]), ([8, 5, 5], [3, 2, 3]), ([3; 3], [2; 3])] {
        let x = common::random_tensor(&mut rng, Shape5::from_spatial(2, 2, n).unwrap());
        let frags = mpf_pool(x.clone(), p, &Threads::new(3), &mem).unwrap();
        let dense = recombine_fragments(&frags, &[p]).unwrap();
        let want = max_filter(&x, p);
        let ext = [0, 1, 2].map(|a| n[a] + 1 - p[a]);
        assert_eq!(dense.shape().spatial(), ext);
        assert_eq!(dense.data(), want.data());
    }
}

#[test]
fn two_pool_network_matches_sliding_window_oracle() {
    let net = NetworkSpec::new(
        1,
        vec![
            LayerSpec::conv(2, 2, Activation::Relu),
            LayerSpec::pool(2),
            LayerSpec::conv(2, 2, Activation::Relu),
            LayerSpec::pool(2),
            LayerSpec::conv(1, 2, Activation::Identity),
        ],
    )
    .unwrap();
    let mut rng = common::rng(19);
    let weights = Weights::from_fn(&net, || rng.gen_range(-1.0..1.0)).unwrap();
    // fov 11; 14 → 13 → 6 → 5 → 2 keeps both fragment layers admissible
    let n = 14;
    let input = common::random_tensor(&mut rng, Shape5::cube(1, 1, n).unwrap());
    let want = sliding_window(&net, &weights, &input).unwrap();

    let mem = MemoryTracker::unlimited();
    let mut x = input.clone();
    let mut windows = Vec::new();
    let mut conv = weights.layers.iter();
    for layer in &net.layers {
        x = match layer {
            LayerSpec::Conv { .. } => conv_direct(x, conv.next().unwrap(), DirectVariant::Naive, &Serial, &mem).unwrap(),
            LayerSpec::Pool { window, .. } => {
                windows.push(*window);
                mpf_pool(x, *window, &Serial, &mem).unwrap()
            }
        };
    }
    let dense = recombine_fragments(&x, &windows).unwrap();
    assert_eq!(dense.shape(), want.shape());
    assert!(common::rel(&dense, &want) < 1e-12);
}
