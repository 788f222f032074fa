//! Property checks shared by `swconv verify` and the acceptance suite.
//!
//! Each check returns an [`Outcome`] instead of panicking so a caller can
//! report every result.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swconv_core::cost::{
    field_of_view, layer_memory, network_memory, theoretical_speedup, transformed_len, CostConstants, MemoryDims,
    PrimitiveKind, ResourceEnv, SpeedupBaseline, DEFAULT_FFT_CONSTANT,
};
use swconv_core::fft::{
    batched_fft_forward, naive_fft_flops, pruned_fft_flops, pruned_fft_forward, pruned_fft_inverse, Engine, FftPlan3,
    FftWorkspace, RadixProfile,
};
use swconv_core::layers::{
    conv_direct, conv_fft_data_parallel, conv_fft_staged, conv_fft_task_parallel, pool, Activation, ConvLayerParams,
    DirectVariant, PoolMode, PoolParams, TaskPool,
};
use swconv_core::memory::{MemoryAudit, MemoryTracker};
use swconv_core::network::{LayerSpec, NetworkSpec, PoolChoice, Weights};
use swconv_core::oracle::{dense_dft3, exhaustive_host_throughput, sliding_window};
use swconv_core::parallel::Serial;
use swconv_core::planner::{
    host_plan, optimize_plan, pipeline_split, propagate_shapes, DeviceModel, Domains, ExecutionPlan, HostModel,
    NoObserver, PlanRunner, ShapeSearch, Strategy,
};
use swconv_core::tensor::{max_relative_error, max_relative_error_complex};
use swconv_core::{Complex, Real, Shape5, Tensor5};

use crate::timing::{measure, run_pipelined, run_serial};

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Outcome::new(false, detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape5) -> Tensor5<f64> {
    Tensor5::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn random_weights(net: &NetworkSpec, rng: &mut ChaCha8Rng) -> Weights<f64> {
    Weights::from_fn(net, || rng.gen_range(-1.0..1.0)).unwrap()
}

/// Entries `(i, y, z)`, `i ≤ x′/2`, of a full spectrum.
fn half_x(full: &[Complex<f64>], p: [usize; 3]) -> Vec<Complex<f64>> {
    let mut out = Vec::with_capacity((p[0] / 2 + 1) * p[1] * p[2]);
    for i in 0..p[0] / 2 + 1 {
        out.extend_from_slice(&full[i * p[1] * p[2]..(i + 1) * p[1] * p[2]]);
    }
    out
}

/// Entries `(z, y, x)`, `z ≤ z′/2`, of a full spectrum.
fn half_z_permuted(full: &[Complex<f64>], p: [usize; 3]) -> Vec<Complex<f64>> {
    let mut out = Vec::with_capacity((p[2] / 2 + 1) * p[1] * p[0]);
    for z in 0..p[2] / 2 + 1 {
        for y in 0..p[1] {
            for x in 0..p[0] {
                out.push(full[(x * p[1] + y) * p[2] + z]);
            }
        }
    }
    out
}

/// Random images of extent `k ≤ 7` zero-padded into `n′ ≤ 16`, transformed
/// by the nested and batched algorithms and compared with a dense DFT.
pub fn fft_matches_dense_dft(seed: u64, cases: usize) -> Outcome {
    let mut rng = rng(seed);
    let profile = RadixProfile::smooth13();
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let padded: [usize; 3] = std::array::from_fn(|_| rng.gen_range(1..=16));
        if !padded.iter().all(|&n| profile.admits(n)) {
            return Outcome::fail(format!("size {padded:?} unexpectedly inadmissible"));
        }
        let dims: [usize; 3] = std::array::from_fn(|a| rng.gen_range(1..=padded[a].min(7)));
        let plan = FftPlan3::<f64>::new(padded, &profile, Engine::MixedRadix).unwrap();
        let b = rng.gen_range(1..=3);
        let imgs = random_tensor(&mut rng, Shape5::from_spatial(b, 1, dims).unwrap());
        let nested = pruned_fft_forward(imgs.image(0, 0), dims, &plan, &Serial).unwrap();
        let want = dense_dft3(imgs.image(0, 0), dims, padded);
        worst = worst.max(max_relative_error_complex(nested.data(), &half_x(&want, padded)));
        let back = pruned_fft_inverse(nested, dims, &plan, &Serial).unwrap();
        worst = worst.max(max_relative_error(back.data(), imgs.image(0, 0)));

        let mut scratch = vec![Complex::default(); b * dims[0] * (padded[2] / 2 + 1) * padded[1]];
        let mut ws = FftWorkspace::new(&mut scratch, 1 << 12);
        let spec = batched_fft_forward(&imgs, &plan, &mut ws, &Serial).unwrap();
        let per = plan.batched_len();
        for i in 0..b {
            let want = half_z_permuted(&dense_dft3(imgs.image(i, 0), dims, padded), padded);
            worst = worst.max(max_relative_error_complex(&spec.data()[i * per..(i + 1) * per], &want));
        }
        if worst > 1e-12 {
            return Outcome::fail(format!("case {case} ({dims:?} in {padded:?}): relative error {worst:.2e}"));
        }
    }
    Outcome::new(true, format!("{cases} cases, max relative error {worst:.2e}"))
}

const CONV_CAP: usize = 1 << 16;

/// Runs one conv primitive kind the way a plan would.
pub fn run_conv<T: Real>(
    kind: PrimitiveKind,
    x: Tensor5<T>,
    params: &ConvLayerParams<T>,
    workers: usize,
    mem: &MemoryTracker,
) -> swconv_core::Result<Tensor5<T>> {
    let host = RadixProfile::smooth13_restricted();
    let engine = Engine::MixedRadix;
    match kind {
        PrimitiveKind::DirectNaive | PrimitiveKind::DeviceDirectDefault => {
            conv_direct(x, params, DirectVariant::Naive, &Serial, mem)
        }
        PrimitiveKind::DirectTemp => conv_direct(x, params, DirectVariant::TempBuffer, &Serial, mem),
        PrimitiveKind::DeviceDirectPrecomp => {
            let _workspace = mem.charge(x.len())?;
            conv_direct(x, params, DirectVariant::Naive, &Serial, mem)
        }
        PrimitiveKind::FftDataParallel => conv_fft_data_parallel(x, params, &host, engine, &Serial, mem),
        PrimitiveKind::FftTaskParallel => {
            conv_fft_task_parallel(x, params, &host, engine, &TaskPool::simulated(workers), mem)
        }
        PrimitiveKind::FftStaged => conv_fft_staged(x, params, &host, engine, CONV_CAP, &Serial, mem),
        PrimitiveKind::DeviceFft => {
            conv_fft_staged(x, params, &RadixProfile::smooth7(), engine, CONV_CAP, &Serial, mem)
        }
        PrimitiveKind::PoolPlain | PrimitiveKind::PoolFragments => unreachable!("not a conv kind"),
    }
}

/// Direct, FFT data-parallel, FFT task-parallel and FFT staged convolution
/// agree pairwise on random layers.
pub fn conv_primitives_agree(seed: u64, cases: usize) -> Outcome {
    let mut rng = rng(seed);
    let kinds = [
        PrimitiveKind::DirectNaive,
        PrimitiveKind::DirectTemp,
        PrimitiveKind::FftDataParallel,
        PrimitiveKind::FftTaskParallel,
        PrimitiveKind::FftStaged,
    ];
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let n: [usize; 3] = std::array::from_fn(|_| rng.gen_range(1..=10));
        let k: [usize; 3] = std::array::from_fn(|a| rng.gen_range(1..=n[a].min(5)));
        let (s, f, fo) = (rng.gen_range(1..=2), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let x = random_tensor(&mut rng, Shape5::from_spatial(s, f, n).unwrap());
        let act = if rng.gen_bool(0.5) { Activation::Relu } else { Activation::Identity };
        let params = ConvLayerParams::from_fn(fo, f, k, act, || rng.gen_range(-1.0..1.0)).unwrap();
        let workers = rng.gen_range(1..=4);
        let mem = MemoryTracker::unlimited();
        let outs: Vec<_> = kinds.iter().map(|&kind| run_conv(kind, x.clone(), &params, workers, &mem)).collect();
        let outs: Vec<Tensor5<f64>> = match outs.into_iter().collect() {
            Ok(o) => o,
            Err(e) => return Outcome::fail(format!("case {case}: {e}")),
        };
        for i in 0..outs.len() {
            for j in i + 1..outs.len() {
                let e = max_relative_error(outs[i].data(), outs[j].data());
                worst = worst.max(e);
                if e > 1e-10 {
                    return Outcome::fail(format!(
                        "case {case}: {} vs {} relative error {e:.2e} (S={s} f={f} f'={fo} n={n:?} k={k:?})",
                        kinds[i], kinds[j]
                    ));
                }
            }
        }
    }
    Outcome::new(true, format!("{cases} layers x 5 primitives, max pairwise error {worst:.2e}"))
}

/// conv3, fragment pool 2, conv3, fragment pool 2, conv3.
pub fn two_fragment_net(features: usize) -> NetworkSpec {
    let c = |f, act| LayerSpec::conv(f, 3, act);
    let p = || LayerSpec::Pool {
        window: [2; 3],
        choice: PoolChoice::Fragments,
    };
    NetworkSpec::new(
        1,
        vec![c(features, Activation::Relu), p(), c(features, Activation::Relu), p(), c(1, Activation::Identity)],
    )
    .unwrap()
}

/// Smallest cubic extent at least `from` admitted by `modes`.
pub fn first_admissible(net: &NetworkSpec, from: usize, modes: &[PoolMode]) -> usize {
    (from..)
        .find(|&n| propagate_shapes(net, Shape5::cube(1, net.input_features, n).unwrap(), modes).is_ok())
        .unwrap()
}

/// Every host conv primitive assigned to every conv layer, executed in
/// 32-bit with fragment recombination, against the 64-bit sliding-window
/// oracle evaluated on the same 32-bit-rounded weights and input.
pub fn sliding_window_equivalence(seed: u64) -> Outcome {
    let net = two_fragment_net(3);
    let modes = [PoolMode::Fragments; 2];
    let fov = field_of_view(&net)[0];
    let n = first_admissible(&net, fov + 4, &modes);
    let mut rng = rng(seed);
    let weights = random_weights(&net, &mut rng);
    let input = random_tensor(&mut rng, Shape5::cube(1, 1, n).unwrap());
    let w32 = weights.cast::<f32>();
    let x32 = input.cast::<f32>();
    let want = match sliding_window(&net, &w32.cast::<f64>(), &x32.cast::<f64>()) {
        Ok(w) => w,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let host = HostModel::new(
        ResourceEnv::new(2, usize::MAX / 4, CONV_CAP).unwrap(),
        CostConstants::new(DEFAULT_FFT_CONSTANT, 1e10, 1e9).unwrap(),
    );
    let base = match host_plan(&net, input.shape(), &modes, &host) {
        Ok(p) => p,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let mut worst: f64 = 0.0;
    for kind in PrimitiveKind::HOST_CONV {
        let plan = with_conv_kind(&base, &net, kind);
        let runner = PlanRunner::new(&plan, &net, &w32, &host, None, &Serial).unwrap();
        let got = match runner.run(x32.clone(), &mut NoObserver) {
            Ok(g) => g,
            Err(e) => return Outcome::fail(format!("{kind}: {e}")),
        };
        if got.shape() != want.shape() {
            return Outcome::fail(format!("{kind}: shape {:?} vs {:?}", got.shape(), want.shape()));
        }
        let e = max_relative_error(got.cast::<f64>().data(), want.data());
        worst = worst.max(e);
        if e > 1e-6 {
            return Outcome::fail(format!("{kind}: relative error {e:.2e}"));
        }
    }
    Outcome::new(
        true,
        format!("fov {fov}, extent {n}, dense output {}^3, 5 plans, max error {worst:.2e} (f32)", want.shape().x),
    )
}

/// `plan` with every conv layer switched to `kind`.
pub fn with_conv_kind(plan: &ExecutionPlan, net: &NetworkSpec, kind: PrimitiveKind) -> ExecutionPlan {
    let mut p = plan.clone();
    for l in &mut p.layers {
        if !net.layers[l.layer].is_pool() {
            l.kind = kind;
        }
    }
    p
}

/// Audited peak of each primitive against its memory formula on a grid of
/// `points` layer shapes.
pub fn memory_model_fidelity(seed: u64, points: usize) -> Outcome {
    let mut rng = rng(seed);
    let conv_kinds = [
        PrimitiveKind::DirectNaive,
        PrimitiveKind::DirectTemp,
        PrimitiveKind::FftDataParallel,
        PrimitiveKind::FftTaskParallel,
        PrimitiveKind::FftStaged,
        PrimitiveKind::DeviceDirectDefault,
        PrimitiveKind::DeviceDirectPrecomp,
        PrimitiveKind::DeviceFft,
    ];
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut failures = Vec::new();
    for point in 0..points {
        let s = rng.gen_range(1..=2);
        let f = rng.gen_range(1..=8);
        let fo = rng.gen_range(1..=8);
        let n = rng.gen_range(6..=12);
        let k = rng.gen_range(1..=5.min(n));
        let workers = [1, 2, 4][rng.gen_range(0..3)];
        let x = random_tensor(&mut rng, Shape5::cube(s, f, n).unwrap());
        let params = ConvLayerParams::from_fn(fo, f, [k; 3], Activation::Identity, || rng.gen_range(-1.0..1.0)).unwrap();
        let env = ResourceEnv::new(workers, usize::MAX, CONV_CAP).unwrap();
        let mut audit = |kind: PrimitiveKind, peak: usize, dims: &MemoryDims| {
            let a = MemoryAudit {
                peak,
                model: layer_memory(kind, dims, &env),
            };
            let r = a.ratio();
            lo = lo.min(r);
            hi = hi.max(r);
            if !(0.5..=1.15).contains(&r) {
                failures.push(format!("{kind} at point {point} (S={s} f={f} f'={fo} n={n} k={k} T={workers}): {r:.3}"));
            }
        };
        for kind in conv_kinds {
            let mem = MemoryTracker::unlimited();
            if let Err(e) = run_conv(kind, x.clone(), &params, workers, &mem) {
                return Outcome::fail(format!("{kind}: {e}"));
            }
            let profile = if kind == PrimitiveKind::DeviceFft {
                RadixProfile::smooth7()
            } else {
                RadixProfile::smooth13_restricted()
            };
            let dims = MemoryDims {
                s: s as f64,
                f: f as f64,
                f_out: fo as f64,
                n: (n * n * n) as f64,
                n_out: (n - k + 1).pow(3) as f64,
                nt: if kind.is_fft() { transformed_len(kind, [n; 3], &profile) as f64 } else { 0.0 },
            };
            audit(kind, mem.peak(), &dims);
        }
        let p = rng.gen_range(2..=3);
        for (mode, kind) in [(PoolMode::Plain, PrimitiveKind::PoolPlain), (PoolMode::Fragments, PrimitiveKind::PoolFragments)] {
            let m = if mode == PoolMode::Plain { n - n % p } else { (n + 1) / p * p - 1 };
            let xin = random_tensor(&mut rng, Shape5::cube(s, f, m).unwrap());
            let mem = MemoryTracker::unlimited();
            if let Err(e) = pool(xin, PoolParams::new([p; 3], mode).unwrap(), &Serial, &mem) {
                return Outcome::fail(format!("{kind}: {e}"));
            }
            let frag = if mode == PoolMode::Fragments { p * p * p } else { 1 };
            let dims = MemoryDims {
                s: s as f64,
                f: f as f64,
                f_out: (f * frag) as f64,
                n: (m * m * m) as f64,
                n_out: (m / p).pow(3) as f64,
                nt: 0.0,
            };
            audit(kind, mem.peak(), &dims);
        }
    }
    let summary = format!("{points} points x 10 primitives, ratios in [{lo:.3}, {hi:.3}]");
    if failures.is_empty() {
        Outcome::new(true, summary)
    } else {
        Outcome::fail(format!("{summary}; {} outside [0.5, 1.15]: {}", failures.len(), failures.join("; ")))
    }
}

/// Modeled pruned/naive transform cost: at most 0.40 for `k ≤ 9, n ≥ 64`,
/// and within 0.02 of 1/3 at `n = 512, k = 3`.
pub fn pruned_fft_cost() -> Outcome {
    let c = DEFAULT_FFT_CONSTANT;
    let mut worst: f64 = 0.0;
    let sizes = (64..=1024).chain((11..=20).map(|e| 1usize << e));
    for n in sizes {
        for k in 1..=9 {
            let r = pruned_fft_flops(n as f64, k as f64, c) / naive_fft_flops(n as f64, c);
            worst = worst.max(r);
            if r > 0.40 {
                return Outcome::fail(format!("n={n} k={k}: ratio {r:.4}"));
            }
        }
    }
    let at = pruned_fft_flops(512.0, 3.0, c) / naive_fft_flops(512.0, c);
    let ok = (at - 1.0 / 3.0).abs() <= 0.02;
    Outcome::new(ok, format!("max ratio {worst:.4} over k<=9, n>=64; n=512 k=3 ratio {at:.4}"))
}

/// Modeled speedup-vs-memory points `(memory, speedup)` for batch `s` over
/// extents `fov+1 .. fov+span` (all pooling layers as fragments).
pub fn speedup_curve(net: &NetworkSpec, s: usize, span: usize) -> Vec<(usize, f64, f64)> {
    let fov = field_of_view(net)[0];
    (fov + 1..fov + span)
        .filter_map(|n| {
            let sp = theoretical_speedup(net, n, s, DEFAULT_FFT_CONSTANT, SpeedupBaseline::Fft).ok()?;
            Some((n, network_memory(net, n, s).ok()?, sp))
        })
        .collect()
}

fn envelope(points: &[(usize, f64, f64)], budget: f64) -> Option<f64> {
    points.iter().filter(|p| p.1 <= budget).map(|p| p.2).reduce(f64::max)
}

/// The best batch-1 speedup within any memory budget is at least the best
/// speedup of batches 2 and 4 within the same budget.
pub fn batch_one_dominates(net: &NetworkSpec, span: usize) -> Outcome {
    let one = speedup_curve(net, 1, span);
    let top = one.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut budgets = 0;
    let mut margin = f64::INFINITY;
    for s in [2, 4] {
        let other = speedup_curve(net, s, span);
        for &(_, budget, _) in other.iter().filter(|p| p.1 <= top) {
            let (Some(a), Some(b)) = (envelope(&one, budget), envelope(&other, budget)) else {
                continue;
            };
            budgets += 1;
            margin = margin.min(a / b);
            if a < b {
                return Outcome::fail(format!("S={s} at budget {budget:.3e}: S=1 reaches {a:.3}, S={s} {b:.3}"));
            }
        }
    }
    Outcome::new(budgets > 0, format!("{budgets} shared budgets, min S=1 / S>1 speedup ratio {margin:.4}"))
}

/// A random net of conv blocks separated by pooling layers, at most
/// `max_layers` layers, field of view at most `max_fov`.
pub fn random_net(rng: &mut ChaCha8Rng, max_layers: usize, max_fov: usize) -> NetworkSpec {
    loop {
        let mut layers = Vec::new();
        let f0 = rng.gen_range(1..=2);
        while layers.len() < max_layers {
            if !layers.is_empty() && rng.gen_bool(0.3) {
                if layers.len() + 2 > max_layers {
                    break;
                }
                layers.push(LayerSpec::pool(rng.gen_range(2..=3)));
            }
            layers.push(LayerSpec::conv(rng.gen_range(1..=3), rng.gen_range(1..=4), Activation::Relu));
            if rng.gen_bool(0.3) {
                break;
            }
        }
        let net = NetworkSpec::new(f0, layers).unwrap();
        if field_of_view(&net)[0] <= max_fov {
            return net;
        }
    }
}

fn rerun<T: Real>(plan: &ExecutionPlan, net: &NetworkSpec, host: &HostModel, rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let weights = random_weights(net, rng).cast::<T>();
    let input = random_tensor(rng, plan.input).cast::<T>();
    let runner = PlanRunner::new(plan, net, &weights, host, None, &Serial).map_err(|e| e.to_string())?;
    runner.run(input, &mut NoObserver).map_err(|e| e.to_string())?;
    Ok(runner.peaks().0)
}

/// The planner's best host-only throughput equals an independent exhaustive
/// scorer on random nets, and every plan runs within its memory cap.
pub fn planner_matches_exhaustive(seed: u64, nets: usize, max_extent: usize) -> Outcome {
    let mut rng = rng(seed);
    let (mut compared, mut infeasible, mut executed) = (0, 0, 0);
    for i in 0..nets {
        let net = random_net(&mut rng, 6, max_extent);
        let search = ShapeSearch::cubes(max_extent).with_batch(if rng.gen_bool(0.25) { 2 } else { 1 });
        let roomy = HostModel::new(
            ResourceEnv::new(rng.gen_range(1..=4), 1 << 30, CONV_CAP).unwrap(),
            CostConstants::new(DEFAULT_FFT_CONSTANT, 1e9, 1e9).unwrap(),
        );
        // a tight cap from a fraction of the roomy optimum's peak
        let cap = match optimize_plan(&net, &Domains::host_only(roomy.clone()), &search) {
            Ok(p) => ((p.host_peak * rng.gen_range(0.1..1.0)) as usize).max(1),
            Err(_) => 1 << 30,
        };
        for host in [roomy.clone(), HostModel::new(ResourceEnv { capacity: cap, ..roomy.env }, roomy.constants)] {
            let want = exhaustive_host_throughput(&net, &host, &search);
            let got = optimize_plan(&net, &Domains::host_only(host.clone()), &search);
            match (&got, want) {
                (Ok(p), Some(w)) => {
                    if p.throughput() != w {
                        return Outcome::fail(format!("net {i}: planner {} vs exhaustive {w}", p.throughput()));
                    }
                    compared += 1;
                    let peak = rerun::<f64>(p, &net, &host, &mut rng).map_err(|e| format!("net {i}: {e}"));
                    match peak {
                        Ok(peak) if peak <= host.env.capacity && peak as f64 <= p.host_peak * 1.15 + 1.0 => executed += 1,
                        Ok(peak) => {
                            return Outcome::fail(format!(
                                "net {i}: audited peak {peak} vs plan {} cap {}",
                                p.host_peak, host.env.capacity
                            ))
                        }
                        Err(e) => return Outcome::fail(e),
                    }
                }
                (Err(_), None) => infeasible += 1,
                (Ok(p), None) => return Outcome::fail(format!("net {i}: planner found {p} but exhaustive found nothing")),
                (Err(e), Some(w)) => return Outcome::fail(format!("net {i}: planner failed ({e}), exhaustive {w}")),
            }
        }
        // with a device the planner may only do better
        let device = DeviceModel::new(
            ResourceEnv::new(1, 1 << 16, 1 << 12).unwrap(),
            CostConstants::new(DEFAULT_FFT_CONSTANT, 4e9, 1e9).unwrap(),
        );
        if let (Ok(with), Ok(without)) = (
            optimize_plan(&net, &Domains::with_device(roomy.clone(), device), &search),
            optimize_plan(&net, &Domains::host_only(roomy.clone()), &search),
        ) {
            if with.throughput() < without.throughput() {
                return Outcome::fail(format!("net {i}: adding a device lowered modeled throughput"));
            }
        }
    }
    Outcome::new(
        compared > 0,
        format!("{nets} nets, {compared} optima equal, {infeasible} agreed infeasible, {executed} re-audited"),
    )
}

/// Results of the pipelined-vs-serial experiment.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub plan: ExecutionPlan,
    pub modeled_ratio: f64,
    pub serial_seconds: f64,
    pub pipelined_seconds: f64,
}

/// Heavy two-layer host head, light device tail.
pub fn pipeline_net() -> NetworkSpec {
    NetworkSpec::new(
        1,
        vec![
            LayerSpec::conv(6, 5, Activation::Relu),
            LayerSpec::conv(6, 5, Activation::Relu),
            LayerSpec::conv(1, 1, Activation::Identity),
        ],
    )
    .unwrap()
}

/// Calibrates the host rate from a measured head, then the device rate
/// and transfer rate so the modeled tail equals the modeled head; runs
/// `items` inputs serially and pipelined with enforced device delays.
/// Calibration is repeated before each of `rounds` rounds so drift in host
/// speed does not unbalance the two segments; times are summed over rounds.
pub fn pipeline_experiment(extent: usize, items: usize, rounds: usize, seed: u64) -> Result<PipelineRun, String> {
    let net = pipeline_net();
    let input = Shape5::cube(1, 1, extent).map_err(|e| e.to_string())?;
    let mut rng = rng(seed);
    let weights = random_weights(&net, &mut rng);
    let sample = random_tensor(&mut rng, input);
    let mut plan = None;
    let mut modeled_ratio = 0.0;
    let (mut serial_seconds, mut pipelined_seconds) = (0.0, 0.0);
    for _ in 0..rounds.max(1) {
        let (host, device, p) = balanced_split(&net, &weights, &sample, input)?;
        modeled_ratio = p.throughput() / p.serialized().throughput();
        let inputs: Vec<_> = (0..items).map(|_| random_tensor(&mut rng, input)).collect();
        let runner = PlanRunner::new(&p, &net, &weights, &host, Some(&device), &Serial).map_err(|e| e.to_string())?;
        run_serial(&runner, inputs[..1].to_vec(), true).map_err(|e| e.to_string())?;
        let (serial_out, serial_t) = run_serial(&runner, inputs.clone(), true).map_err(|e| e.to_string())?;
        let (piped_out, piped_t) = run_pipelined(&runner, inputs, true).map_err(|e| e.to_string())?;
        if serial_out.len() != items || serial_out.iter().zip(&piped_out).any(|(a, b)| a.data() != b.data()) {
            return Err("pipelined outputs differ from serial outputs".into());
        }
        serial_seconds += serial_t.as_secs_f64();
        pipelined_seconds += piped_t.as_secs_f64();
        plan = Some(p);
    }
    Ok(PipelineRun {
        plan: plan.unwrap(),
        modeled_ratio,
        serial_seconds,
        pipelined_seconds,
    })
}

fn balanced_split(
    net: &NetworkSpec,
    weights: &Weights<f64>,
    sample: &Tensor5<f64>,
    input: Shape5,
) -> Result<(HostModel, DeviceModel, ExecutionPlan), String> {
    let theta = 2;
    let mk_host = |rate: f64| {
        HostModel::new(
            ResourceEnv::new(1, 1 << 28, CONV_CAP).unwrap(),
            CostConstants::new(DEFAULT_FFT_CONSTANT, rate, 1e9).unwrap(),
        )
    };
    let mk_device = |rate: f64, transfer: f64| {
        DeviceModel::new(
            ResourceEnv::new(1, 1 << 26, CONV_CAP).unwrap(),
            CostConstants::new(DEFAULT_FFT_CONSTANT, rate, transfer).unwrap(),
        )
    };

    // host: scale the modeled rate so the modeled head matches the measured one
    let mut host = mk_host(1e9);
    let mut device = mk_device(1e9, 1e9);
    let first = pipeline_split(net, &host, &device, theta, input, &[]).map_err(|e| e.to_string())?;
    let measured_head = {
        let runner = PlanRunner::new(&first, net, weights, &host, Some(&device), &Serial).map_err(|e| e.to_string())?;
        let mut times = Vec::new();
        for i in 0..6 {
            let t = Instant::now();
            runner.run_head(sample.clone(), &mut NoObserver).map_err(|e| e.to_string())?;
            if i > 0 {
                times.push(t.elapsed().as_secs_f64());
            }
        }
        times.sort_by(f64::total_cmp);
        times[times.len() / 2]
    };
    host = mk_host(1e9 * first.head_seconds / measured_head);

    // device: tail compute plus transfers equal to the head, transfers a tenth of it
    let mut plan = pipeline_split(net, &host, &device, theta, input, &[]).map_err(|e| e.to_string())?;
    for _ in 0..4 {
        let head = plan.head_seconds;
        let moved = plan.tail_upload + plan.tail_download;
        let compute: f64 = plan.layers[theta..].iter().map(|l| l.compute_seconds).sum();
        let flops = compute * device.constants.flop_rate;
        device = mk_device(flops / (0.9 * head), moved / (0.1 * head));
        plan = pipeline_split(net, &host, &device, theta, input, &[]).map_err(|e| e.to_string())?;
        if (plan.tail_seconds - plan.head_seconds).abs() <= 1e-12 * plan.head_seconds {
            break;
        }
    }
    Ok((host, device, plan))
}

/// Modeled pipeline throughput is twice the serial split's when the two
/// segments take equal modeled time, and measured pipelining gains ≥1.6×.
pub fn pipeline_overlap(extent: usize, items: usize, rounds: usize, seed: u64) -> Outcome {
    match pipeline_experiment(extent, items, rounds, seed) {
        Err(e) => Outcome::fail(e),
        Ok(r) => {
            let measured = r.serial_seconds / r.pipelined_seconds;
            let ok = r.plan.strategy == Strategy::Pipeline && (r.modeled_ratio - 2.0).abs() <= 1e-9 && measured >= 1.6;
            Outcome::new(
                ok,
                format!(
                    "modeled pipeline/serial {:.6}; measured serial {:.3}s, pipelined {:.3}s ({measured:.2}x) over {rounds}x{items} inputs",
                    r.modeled_ratio, r.serial_seconds, r.pipelined_seconds
                ),
            )
        }
    }
}

/// `net` with every pooling layer forced to `choice`.
pub fn with_pool_choice(net: &NetworkSpec, choice: PoolChoice) -> NetworkSpec {
    let mut n = net.clone();
    for l in &mut n.layers {
        if let LayerSpec::Pool { choice: c, .. } = l {
            *c = choice;
        }
    }
    n
}

/// Best modeled host throughput with all pools as fragments exceeds the
/// all-plain optimum on each network.
pub fn fragments_beat_plain(nets: &[(&str, NetworkSpec)], host_mem: usize, span: usize) -> Outcome {
    let host = HostModel::new(
        ResourceEnv::new(8, host_mem, 1 << 24).unwrap(),
        CostConstants::new(DEFAULT_FFT_CONSTANT, 1e10, 1e9).unwrap(),
    );
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, net) in nets {
        let search = ShapeSearch::cubes(field_of_view(net)[0] + span);
        let best = |choice| optimize_plan(&with_pool_choice(net, choice), &Domains::host_only(host.clone()), &search);
        match (best(PoolChoice::Fragments), best(PoolChoice::Plain)) {
            (Ok(m), Ok(p)) => {
                let r = m.throughput() / p.throughput();
                ok &= r > 1.0;
                lines.push(format!("{name} {r:.2}x"));
            }
            (a, b) => {
                ok = false;
                lines.push(format!("{name}: {:?} / {:?}", a.err(), b.err()));
            }
        }
    }
    Outcome::new(ok, format!("fragment/plain throughput: {}", lines.join(", ")))
}

/// conv3, plain pool 2, conv3.
pub fn cpc_plain_net() -> NetworkSpec {
    NetworkSpec::new(
        1,
        vec![
            LayerSpec::conv(8, 3, Activation::Relu),
            LayerSpec::Pool {
                window: [2; 3],
                choice: PoolChoice::Plain,
            },
            LayerSpec::conv(8, 3, Activation::Relu),
        ],
    )
    .unwrap()
}

/// Measured voxels per second of the host FFT plan at the given extents.
pub fn measured_throughputs(net: &NetworkSpec, extents: &[usize], seed: u64) -> Result<Vec<f64>, String> {
    let host = HostModel::new(
        ResourceEnv::new(1, 1 << 28, CONV_CAP).unwrap(),
        CostConstants::new(DEFAULT_FFT_CONSTANT, 1e9, 1e9).unwrap(),
    );
    let modes = vec![PoolMode::Plain; net.pool_layers().len()];
    let mut rng = rng(seed);
    let weights = random_weights(net, &mut rng);
    let mut out = Vec::new();
    for &n in extents {
        let plan = host_plan(net, Shape5::cube(1, net.input_features, n).unwrap(), &modes, &host).map_err(|e| e.to_string())?;
        let plan = with_conv_kind(&plan, net, PrimitiveKind::FftDataParallel);
        let runner = PlanRunner::new(&plan, net, &weights, &host, None, &Serial).map_err(|e| e.to_string())?;
        let input = random_tensor(&mut rng, plan.input);
        out.push(measure(&runner, &input, 1, 5, false).map_err(|e| e.to_string())?.voxels_per_second);
    }
    Ok(out)
}

/// Measured host FFT throughput is nondecreasing (10% band) across input
/// extents `fov+2, fov+8, fov+16`.
pub fn throughput_grows_with_extent(seed: u64) -> Outcome {
    let net = cpc_plain_net();
    let fov = field_of_view(&net)[0];
    let extents = [fov + 2, fov + 8, fov + 16];
    match measured_throughputs(&net, &extents, seed) {
        Err(e) => Outcome::fail(e),
        Ok(v) => {
            let ok = v.windows(2).all(|w| w[1] >= 0.9 * w[0]);
            let cols: Vec<String> = extents.iter().zip(&v).map(|(n, t)| format!("{n}: {t:.3e}")).collect();
            Outcome::new(ok, format!("voxels/s by extent {}", cols.join(", ")))
        }
    }
}
