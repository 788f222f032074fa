mod common;

use proptest::prelude::*;
use swconv_core::tensor::inverse_permutation;
use swconv_core::{Axis, Complex, ComplexTensor, Shape5, Tensor5};

const AXES: [Axis; 5] = [Axis::Batch, Axis::Feature, Axis::X, Axis::Y, Axis::Z];

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn tensor(dims: &[usize], seed: u64) -> ComplexTensor<f64> {
    let mut rng = common::rng(seed);
    let n: usize = dims.iter().product();
    let data = (0..n)
        .map(|_| Complex::new(rand::Rng::gen_range(&mut rng, -1.0..1.0), rand::Rng::gen_range(&mut rng, -1.0..1.0)))
        .collect();
    ComplexTensor::new(dims.to_vec(), AXES[..dims.len()].to_vec(), data).unwrap()
}

#[test]
fn permute_round_trip_all_permutations_of_rank_four() {
    let t = tensor(&[2, 3, 4, 5], 1);
    for sigma in permutations(4) {
        let p = t.permute(&sigma).unwrap();
        let back = p.permute(&inverse_permutation(&sigma).unwrap()).unwrap();
        assert_eq!(back, t, "sigma {sigma:?}");
    }
}

#[test]
fn permute_moves_elements_to_sigma_index() {
    let t = tensor(&[2, 3, 4], 2);
    let sigma = [2, 0, 1];
    let p = t.permute(&sigma).unwrap();
    assert_eq!(p.dims(), &[3, 4, 2]);
    assert_eq!(p.axes(), &[Axis::Feature, Axis::X, Axis::Batch]);
    for i in 0..2 {
        for j in 0..3 {
            for k in 0..4 {
                let mut o = [0; 3];
                o[sigma[0]] = i;
                o[sigma[1]] = j;
                o[sigma[2]] = k;
                assert_eq!(p.get(&o), t.get(&[i, j, k]));
            }
        }
    }
}

fn sorted_bits(data: &[Complex<f64>]) -> Vec<(u64, u64)> {
    let mut v: Vec<_> = data.iter().map(|c| (c.re.to_bits(), c.im.to_bits())).collect();
    v.sort_unstable();
    v
}

proptest! {
    #[test]
    fn permute_preserves_multiset(dims in proptest::collection::vec(1usize..5, 1..=5), pick in 0usize..120, seed in 0u64..1000) {
        let t = tensor(&dims, seed);
        let perms = permutations(dims.len());
        let sigma = &perms[pick % perms.len()];
        let p = t.permute(sigma).unwrap();
        prop_assert_eq!(sorted_bits(p.data()), sorted_bits(t.data()));
    }

    #[test]
    fn embed_preserves_sum_and_norm(n in 1usize..4, extra in 0usize..3, seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let t = common::random_tensor(&mut rng, Shape5::cube(2, 2, n).unwrap());
        let e = t.embed_zero(Shape5::cube(2, 2, n + extra).unwrap()).unwrap();
        let norm = |x: &Tensor5<f64>| x.data().iter().map(|v| v * v).sum::<f64>();
        let sum = |x: &Tensor5<f64>| x.data().iter().sum::<f64>();
        prop_assert_eq!(norm(&e).to_bits(), norm(&t).to_bits());
        prop_assert_eq!(sum(&e).to_bits(), sum(&t).to_bits());
        prop_assert_eq!(e.crop([0; 3], [n; 3]).unwrap(), t);
    }
}

#[test]
fn embed_random_two_into_five_preserves_sum() {
    let mut rng = common::rng(3);
    let t = common::random_tensor(&mut rng, Shape5::cube(1, 1, 2).unwrap());
    let e = t.embed_zero(Shape5::cube(1, 1, 5).unwrap()).unwrap();
    let s1: f64 = t.data().iter().sum();
    let s2: f64 = e.data().iter().sum();
    assert_eq!(s1, s2);
}

#[test]
fn batch_concat_and_slice_round_trip() {
    let mut rng = common::rng(4);
    let t = common::random_tensor(&mut rng, Shape5::new(5, 2, 2, 3, 1).unwrap());
    let parts = vec![t.batch_slice(0, 2).unwrap(), t.batch_slice(2, 3).unwrap()];
    assert_eq!(Tensor5::concat_batch(parts).unwrap(), t);
    assert!(t.batch_slice(4, 2).is_err());
}
