mod common;

use rand::Rng;
use swconv_core::cost::*;
use swconv_core::fft::{naive_fft_flops, optimal_fft_size, pruned_fft_flops, RadixProfile};
use swconv_core::layers::Activation;
use swconv_core::network::{LayerSpec, NetworkSpec, Weights};
use swconv_core::oracle::sliding_window;
use swconv_core::Shape5;

const C: f64 = DEFAULT_FFT_CONSTANT;

fn relu() -> Activation {
    Activation::Relu
}

/// The bundled two-pooling-layer network with 6³/7³ kernels.
fn two_pool_net() -> NetworkSpec {
    bundled().swap_remove(2)
}

#[test]
fn pruned_fft_cost_examples() {
    let n = 64.0;
    let ratio = pruned_fft_flops(n, 3.0, 1.0) / naive_fft_flops(n, 1.0);
    assert!((ratio - 4297.0 / (3.0 * 4096.0)).abs() < 1e-12);
    for n in [4.0, 17.0, 64.0] {
        assert!((pruned_fft_flops(n, n, C) - naive_fft_flops(n, C)).abs() < 1e-9 * naive_fft_flops(n, C));
    }
    let tiny = pruned_fft_flops(1e6, 1.0, C) / naive_fft_flops(1e6, C);
    assert!((tiny - 1.0 / 3.0).abs() < 1e-5);
}

#[test]
fn flops_monotone() {
    let mut rng = common::rng(1);
    for kind in PrimitiveKind::ALL {
        for _ in 0..50 {
            let d = LayerDims::cubic(
                rng.gen_range(1..4),
                rng.gen_range(1..8),
                rng.gen_range(1..8),
                rng.gen_range(6..40),
                rng.gen_range(1..6),
            );
            let base = layer_flops(kind, &d, C).unwrap();
            let bumps = [
                LayerDims { s: d.s + 1, ..d },
                LayerDims { f: d.f + 1, ..d },
                LayerDims { f_out: d.f_out + 1, ..d },
                LayerDims { n: d.n.map(|v| v + 1), ..d },
            ];
            for b in bumps {
                assert!(layer_flops(kind, &b, C).unwrap() >= base, "{kind} {b:?}");
            }
        }
    }
}

#[test]
fn memory_monotone() {
    let mut rng = common::rng(2);
    let env = ResourceEnv::new(4, usize::MAX, 1 << 20).unwrap();
    for kind in PrimitiveKind::ALL {
        for _ in 0..50 {
            let d = MemoryDims {
                s: rng.gen_range(1..4) as f64,
                f: rng.gen_range(1..8) as f64,
                f_out: rng.gen_range(1..8) as f64,
                n: rng.gen_range(100..1000) as f64,
                n_out: rng.gen_range(10..100) as f64,
                nt: rng.gen_range(100..1500) as f64,
            };
            let base = layer_memory(kind, &d, &env);
            for b in [
                MemoryDims { s: d.s + 1.0, ..d },
                MemoryDims { f: d.f + 1.0, ..d },
                MemoryDims { f_out: d.f_out + 1.0, ..d },
                MemoryDims { n: d.n + 1.0, n_out: d.n_out + 1.0, nt: d.nt + 2.0, ..d },
            ] {
                assert!(layer_memory(kind, &b, &env) >= base, "{kind}");
            }
        }
    }
}

#[test]
fn fft_beats_direct_past_a_finite_crossover() {
    for n in [16usize, 32, 64, 128] {
        for k in [3usize, 5, 7, 9] {
            if ((k * k * k) as f64) <= 3.0 * C * (n as f64).ln() || k > n {
                continue;
            }
            let crossover = (1..10_000).find(|&f| {
                let d = layer_flops_cubic(PrimitiveKind::DirectNaive, 1, f, f, n, k, C).unwrap();
                let ff = layer_flops_cubic(PrimitiveKind::FftDataParallel, 1, f, f, n, k, C).unwrap();
                ff < d
            });
            let f = crossover.unwrap_or_else(|| panic!("no crossover for n={n} k={k}"));
            // once past it, FFT stays ahead
            for g in f..f + 20 {
                let d = layer_flops_cubic(PrimitiveKind::DirectNaive, 1, g, g, n, k, C).unwrap();
                let ff = layer_flops_cubic(PrimitiveKind::FftDataParallel, 1, g, g, n, k, C).unwrap();
                assert!(ff < d);
            }
        }
    }
}

#[test]
fn speedup_increases_with_extent_for_cpcc() {
    let net = NetworkSpec::new(
        1,
        vec![
            LayerSpec::conv(8, 3, relu()),
            LayerSpec::pool(2),
            LayerSpec::conv(8, 3, relu()),
            LayerSpec::conv(2, 3, relu()),
        ],
    )
    .unwrap();
    let fov = field_of_view(&net)[0];
    let mut last = 0.0;
    let mut count = 0;
    for n in fov..fov + 120 {
        if let Ok(s) = theoretical_speedup(&net, n, 1, C, SpeedupBaseline::Fft) {
            assert!(s > last, "n={n}: {s} after {last}");
            last = s;
            count += 1;
        }
    }
    assert!(count > 30);
}

/// Best speedup reachable with memory at most `budget`.
fn envelope(points: &[(f64, f64)], budget: f64) -> Option<f64> {
    points.iter().filter(|p| p.0 <= budget).map(|p| p.1).reduce(f64::max)
}

fn curve(net: &NetworkSpec, s: usize, span: usize) -> Vec<(f64, f64)> {
    let fov = field_of_view(net)[0];
    // curves are made of all-fragment configurations; the field of view itself only admits plain pooling
    (fov + 1..fov + span)
        .filter_map(|n| {
            let sp = theoretical_speedup(net, n, s, C, SpeedupBaseline::Fft).ok()?;
            Some((network_memory(net, n, s).ok()?, sp))
        })
        .collect()
}

#[test]
fn batch_one_dominates_for_two_pool_net() {
    let net = two_pool_net();
    let one = curve(&net, 1, 600);
    for s in [2, 4] {
        let other = curve(&net, s, 600);
        let top = one.iter().map(|p| p.0).fold(0.0, f64::max);
        for &(budget, _) in other.iter().filter(|p| p.0 <= top) {
            let a = envelope(&one, budget).unwrap();
            let b = envelope(&other, budget).unwrap();
            assert!(a >= b, "S={s} budget {budget}: {a} < {b}");
        }
    }
}

#[test]
fn direct_baseline_gives_larger_speedups() {
    let net = two_pool_net();
    let fov = field_of_view(&net)[0];
    let n = fov + 35;
    let fft = theoretical_speedup(&net, n, 1, C, SpeedupBaseline::Fft).unwrap();
    let direct = theoretical_speedup(&net, n, 1, C, SpeedupBaseline::Direct).unwrap();
    assert!(fft > 1.0 && direct > fft);
}

fn bundled() -> Vec<NetworkSpec> {
    let c = |f, k| LayerSpec::conv(f, k, relu());
    let p = || LayerSpec::pool(2);
    vec![
        NetworkSpec::new(1, vec![c(80, 2), p(), c(80, 3), p(), c(80, 3), p(), c(80, 3), c(80, 3), c(80, 3), c(3, 3)]),
        NetworkSpec::new(1, vec![c(80, 4), p(), c(80, 5), p(), c(80, 5), p(), c(80, 5), c(80, 5), c(80, 5), c(3, 5)]),
        NetworkSpec::new(1, vec![c(80, 6), p(), c(80, 7), p(), c(80, 7), c(80, 7), c(80, 7), c(80, 7)]),
        NetworkSpec::new(1, vec![c(80, 8), p(), c(80, 9), p(), c(80, 9), c(80, 9), c(80, 9), c(80, 9)]),
    ]
    .into_iter()
    .map(Result::unwrap)
    .collect()
}

#[test]
fn speedup_is_exactly_one_at_fov_for_table_networks() {
    for net in bundled() {
        let fov = field_of_view(&net);
        assert_eq!(theoretical_speedup(&net, fov[0], 1, C, SpeedupBaseline::Fft).unwrap(), 1.0);
    }
}

/// Field of view by walking backwards from a single output voxel.
fn fov_backward(net: &NetworkSpec) -> usize {
    let mut n = 1;
    for l in net.layers.iter().rev() {
        n = match l {
            LayerSpec::Conv { kernel, .. } => n + kernel[0] - 1,
            LayerSpec::Pool { window, .. } => n * window[0],
        };
    }
    n
}

#[test]
fn fov_matches_backward_recursion_and_oracle() {
    let mut rng = common::rng(3);
    for _ in 0..25 {
        let mut layers = Vec::new();
        let pools = rng.gen_range(0..=2);
        for i in 0..=pools {
            if i > 0 {
                layers.push(LayerSpec::pool(rng.gen_range(2..=3)));
            }
            for _ in 0..rng.gen_range(1..=2) {
                layers.push(LayerSpec::conv(rng.gen_range(1..=2), rng.gen_range(1..=3), Activation::Identity));
            }
        }
        let net = NetworkSpec::new(1, layers).unwrap();
        let fov = field_of_view(&net);
        assert_eq!(fov, [fov_backward(&net); 3]);
        if fov[0] > 14 {
            continue;
        }
        let weights = Weights::from_fn(&net, || rng.gen_range(-1.0..1.0)).unwrap();
        for extra in [0, 2] {
            let n = fov[0] + extra;
            let input = common::random_tensor(&mut rng, Shape5::cube(1, 1, n).unwrap());
            let dense = sliding_window(&net, &weights, &input).unwrap();
            assert_eq!(dense.shape().spatial(), [n - fov[0] + 1; 3]);
        }
    }
}

#[test]
fn fov_of_table_networks() {
    let fovs: Vec<usize> = bundled().iter().map(|n| field_of_view(n)[0]).collect();
    assert_eq!(fovs, vec![fov_backward(&bundled()[0]), fov_backward(&bundled()[1]), fov_backward(&bundled()[2]), fov_backward(&bundled()[3])]);
    assert_eq!(fovs[0], 85);
}

#[test]
fn padded_sizes_are_monotone_and_admissible() {
    for profile in [RadixProfile::smooth13(), RadixProfile::smooth13_restricted(), RadixProfile::smooth7()] {
        let mut last = 0;
        for n in 1..600 {
            let m = optimal_fft_size(n, &profile);
            assert!(m >= n && m >= last && profile.admits(m));
            last = m;
        }
    }
    assert_eq!(optimal_fft_size(17, &RadixProfile::smooth7()), 18);
}
