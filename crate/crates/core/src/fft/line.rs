//! 1D complex transforms of arbitrary length.
//!
//! Forward transforms use `e^{-2πi jk/n}`; inverse transforms conjugate the
//! kernel and are unnormalized.

use alloc::vec::Vec;

use num_complex::Complex;

use crate::Real;

/// Which 1D algorithm a [`LinePlan`] runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Engine {
    /// O(n²) summation; the reference for oracles.
    Direct,
    /// Self-sorting mixed-radix transform, O(n Σ pᵢ).
    #[default]
    MixedRadix,
}

/// A precomputed transform of one length.
#[derive(Clone, Debug)]
pub struct LinePlan<T> {
    n: usize,
    engine: Engine,
    factors: Vec<usize>,
    twiddles: Vec<Complex<T>>,
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while n.is_multiple_of(4) {
        out.push(4);
        n /= 4;
    }
    let mut p = 2;
    while n > 1 {
        if p * p > n {
            out.push(n);
            break;
        }
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    out
}

impl<T: Real> LinePlan<T> {
    pub fn new(n: usize, engine: Engine) -> Self {
        assert!(n >= 1, "transform length must be positive");
        let twiddles = (0..n)
            .map(|k| {
                let a = -2.0 * core::f64::consts::PI * k as f64 / n as f64;
                Complex::new(T::from_f64(libm_cos(a)), T::from_f64(libm_sin(a)))
            })
            .collect();
        LinePlan {
            n,
            engine,
            factors: factorize(n),
            twiddles,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    /// In-place forward transform; `tmp` needs at least `len()` elements.
    pub fn forward(&self, data: &mut [Complex<T>], tmp: &mut [Complex<T>]) {
        self.run(data, tmp, false)
    }

    /// In-place unnormalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex<T>], tmp: &mut [Complex<T>]) {
        self.run(data, tmp, true)
    }

    #[inline]
    fn w(&self, k: usize, inv: bool) -> Complex<T> {
        let w = self.twiddles[k];
        if inv {
            w.conj()
        } else {
            w
        }
    }

    fn run(&self, data: &mut [Complex<T>], tmp: &mut [Complex<T>], inv: bool) {
        let n = self.n;
        let data = &mut data[..n];
        let tmp = &mut tmp[..n];
        if n == 1 {
            return;
        }
        match self.engine {
            Engine::Direct => {
                for (k, out) in tmp.iter_mut().enumerate() {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for (j, x) in data.iter().enumerate() {
                        acc += *x * self.w((j * k) % n, inv);
                    }
                    *out = acc;
                }
                data.copy_from_slice(tmp);
            }
            Engine::MixedRadix => self.stockham(data, tmp, inv),
        }
    }

    // Stage invariant: with m points merged so far and l = n/m, position
    // k + j·m holds the length-m transform of x[j + l·q] at frequency k.
    fn stockham(&self, data: &mut [Complex<T>], tmp: &mut [Complex<T>], inv: bool) {
        let n = self.n;
        let mut m = 1;
        let mut src_is_data = true;
        let mut acc = [Complex::new(T::zero(), T::zero()); 16];
        let mut big: Vec<Complex<T>> = Vec::new();
        for &p in &self.factors {
            let l = n / (m * p);
            let (src, dst): (&[Complex<T>], &mut [Complex<T>]) = if src_is_data {
                (&*data, &mut *tmp)
            } else {
                (&*tmp, &mut *data)
            };
            let root = n / p;
            match p {
                2 => {
                    for j in 0..l {
                        for k in 0..m {
                            let a = src[k + j * m];
                            let b = src[k + j * m + l * m] * self.w(k * l, inv);
                            dst[k + 2 * j * m] = a + b;
                            dst[k + m + 2 * j * m] = a - b;
                        }
                    }
                }
                4 => {
                    for j in 0..l {
                        for k in 0..m {
                            let base = k + j * m;
                            let a0 = src[base];
                            let a1 = src[base + l * m] * self.w(k * l, inv);
                            let a2 = src[base + 2 * l * m] * self.w(2 * k * l, inv);
                            let a3 = src[base + 3 * l * m] * self.w(3 * k * l, inv);
                            let s02 = a0 + a2;
                            let d02 = a0 - a2;
                            let s13 = a1 + a3;
                            let d13 = a1 - a3;
                            // multiply by ∓i
                            let rot = if inv {
                                Complex::new(-d13.im, d13.re)
                            } else {
                                Complex::new(d13.im, -d13.re)
                            };
                            let o = k + 4 * j * m;
                            dst[o] = s02 + s13;
                            dst[o + m] = d02 + rot;
                            dst[o + 2 * m] = s02 - s13;
                            dst[o + 3 * m] = d02 - rot;
                        }
                    }
                }
                _ => {
                    let a: &mut [Complex<T>] = if p <= acc.len() {
                        &mut acc[..p]
                    } else {
                        big.resize(p, Complex::new(T::zero(), T::zero()));
                        &mut big[..]
                    };
                    for j in 0..l {
                        for k in 0..m {
                            for (q, aq) in a.iter_mut().enumerate() {
                                *aq = src[k + j * m + q * l * m] * self.w((q * k * l) % n, inv);
                            }
                            for r in 0..p {
                                let mut s = a[0];
                                for (q, aq) in a.iter().enumerate().skip(1) {
                                    s += *aq * self.w(((q * r) % p) * root, inv);
                                }
                                dst[k + m * r + m * p * j] = s;
                            }
                        }
                    }
                }
            }
            m *= p;
            src_is_data = !src_is_data;
        }
        if !src_is_data {
            data.copy_from_slice(tmp);
        }
    }
}

/// Fills `line[n/2+1..n]` from the lower half so it is the Hermitian spectrum
/// of a real signal.
pub fn hermitian_extend<T: Real>(line: &mut [Complex<T>]) {
    let n = line.len();
    for k in n / 2 + 1..n {
        line[k] = line[n - k].conj();
    }
}

#[inline]
fn libm_cos(x: f64) -> f64 {
    num_traits::Float::cos(x)
}

#[inline]
fn libm_sin(x: f64) -> f64 {
    num_traits::Float::sin(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_relative_error_complex;
    use rand::{Rng, SeedableRng};

    fn random_line(n: usize, seed: u64) -> Vec<Complex<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn dft(x: &[Complex<f64>], sign: f64) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let a = sign * 2.0 * core::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                        v * Complex::new(a.cos(), a.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn engines_match_summation() {
        for n in (1..=40).chain([48, 49, 64, 77, 121, 126, 143, 169, 210]) {
            let x = random_line(n, n as u64);
            let want = dft(&x, -1.0);
            let want_inv = dft(&x, 1.0);
            for engine in [Engine::Direct, Engine::MixedRadix] {
                let plan = LinePlan::<f64>::new(n, engine);
                let mut tmp = alloc::vec![Complex::default(); n];
                let mut got = x.clone();
                plan.forward(&mut got, &mut tmp);
                assert!(max_relative_error_complex(&got, &want) < 1e-13, "n={n} {engine:?}");
                let mut got = x.clone();
                plan.inverse(&mut got, &mut tmp);
                assert!(max_relative_error_complex(&got, &want_inv) < 1e-13, "n={n} {engine:?}");
            }
        }
    }

    #[test]
    fn factorization_covers_length() {
        for n in 1..500 {
            assert_eq!(factorize(n).iter().product::<usize>().max(1), n);
        }
    }
}
