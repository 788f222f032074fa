use alloc::vec::Vec;

const PRIMES: [u32; 6] = [2, 3, 5, 7, 11, 13];

/// Transform lengths a 1D engine is considered fast for: products of allowed
/// primes, optionally with a cap on the combined exponent of 11 and 13.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RadixProfile {
    allowed: [bool; 6],
    large_exponent_cap: Option<u32>,
}

impl RadixProfile {
    /// `primes` must come from {2, 3, 5, 7, 11, 13}; 2 is always added.
    pub fn new(primes: &[u32], large_exponent_cap: Option<u32>) -> crate::Result<Self> {
        let mut allowed = [false; 6];
        allowed[0] = true;
        for p in primes {
            let i = PRIMES
                .iter()
                .position(|q| q == p)
                .ok_or_else(|| crate::error::invalid!("{p} is not a supported radix"))?;
            allowed[i] = true;
        }
        Ok(RadixProfile {
            allowed,
            large_exponent_cap,
        })
    }

    /// {2,3,5,7,11,13}, unrestricted.
    pub fn smooth13() -> Self {
        Self::new(&PRIMES, None).unwrap()
    }

    /// {2,3,5,7,11,13} with at most one factor of 11 or 13. Host default.
    pub fn smooth13_restricted() -> Self {
        Self::new(&PRIMES, Some(1)).unwrap()
    }

    /// {2,3,5,7}. Device default.
    pub fn smooth7() -> Self {
        Self::new(&[2, 3, 5, 7], None).unwrap()
    }

    pub fn primes(&self) -> Vec<u32> {
        PRIMES
            .iter()
            .zip(self.allowed)
            .filter(|(_, a)| *a)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn admits(&self, n: usize) -> bool {
        if n == 0 {
            return false;
        }
        let mut m = n;
        let mut large = 0;
        for (i, &p) in PRIMES.iter().enumerate() {
            let p = p as usize;
            while m.is_multiple_of(p) {
                if !self.allowed[i] {
                    return false;
                }
                m /= p;
                if p >= 11 {
                    large += 1;
                }
            }
        }
        m == 1 && self.large_exponent_cap.is_none_or(|cap| large <= cap)
    }
}

impl Default for RadixProfile {
    fn default() -> Self {
        Self::smooth13_restricted()
    }
}

/// Smallest admissible length ≥ `n` (`n = 0` is treated as 1).
pub fn optimal_fft_size(n: usize, profile: &RadixProfile) -> usize {
    (n.max(1)..).find(|&m| profile.admits(m)).unwrap()
}

/// [`optimal_fft_size`] per axis.
pub fn optimal_fft_shape(n: [usize; 3], profile: &RadixProfile) -> [usize; 3] {
    n.map(|e| optimal_fft_size(e, profile))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_selection() {
        let p7 = RadixProfile::new(&[2, 3, 5, 7], None).unwrap();
        assert_eq!(optimal_fft_size(17, &p7), 18);
        assert_eq!(optimal_fft_size(8, &p7), 8);
        assert_eq!(optimal_fft_size(8, &RadixProfile::new(&[], None).unwrap()), 8);
        assert_eq!(optimal_fft_size(121, &RadixProfile::smooth13_restricted()), 125);
        assert_eq!(optimal_fft_size(126, &RadixProfile::smooth13_restricted()), 126);
        assert_eq!(optimal_fft_size(143, &RadixProfile::smooth13_restricted()), 144);
        assert_eq!(optimal_fft_size(169, &RadixProfile::smooth13_restricted()), 175);
        assert_eq!(optimal_fft_size(121, &RadixProfile::smooth13()), 121);
    }

    #[test]
    fn powers_of_two_always_admitted() {
        let only2 = RadixProfile::new(&[], None).unwrap();
        for e in 0..20 {
            assert!(only2.admits(1 << e));
        }
        assert!(!only2.admits(3));
    }

    #[test]
    fn monotone() {
        let p = RadixProfile::smooth13_restricted();
        let sizes: Vec<_> = (1..2000).map(|n| optimal_fft_size(n, &p)).collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_unknown_prime() {
        assert!(RadixProfile::new(&[17], None).is_err());
    }
}
