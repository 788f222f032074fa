//! Working-set accounting.
//!
//! Every primitive charges the buffers it holds against a [`MemoryTracker`];
//! the tracker records the high-water mark and, when capped, refuses charges
//! that would exceed the cap. Units are real-scalar equivalents: a complex
//! element counts as two.

use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct MemoryTracker {
    current: AtomicUsize,
    peak: AtomicUsize,
    capacity: usize,
}

impl Default for MemoryTracker {
    fn default() -> Self {
        Self::unlimited()
    }
}

impl MemoryTracker {
    pub fn unlimited() -> Self {
        Self::with_capacity(usize::MAX)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        MemoryTracker {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    /// Forgets the high-water mark, keeping live charges.
    pub fn reset_peak(&self) {
        self.peak.store(self.current(), Ordering::SeqCst);
    }

    /// Charges `amount` until the returned guard is dropped.
    pub fn charge(&self, amount: usize) -> Result<Charge<'_>> {
        let mut cur = self.current.load(Ordering::SeqCst);
        loop {
            let next = cur
                .checked_add(amount)
                .filter(|&n| n <= self.capacity)
                .ok_or(Error::ResourceExhausted {
                    requested: amount,
                    in_use: cur,
                    capacity: self.capacity,
                })?;
            match self
                .current
                .compare_exchange(cur, next, Ordering::SeqCst, Ordering::SeqCst)
            {
                Ok(_) => {
                    self.peak.fetch_max(next, Ordering::SeqCst);
                    return Ok(Charge {
                        tracker: self,
                        amount,
                    });
                }
                Err(actual) => cur = actual,
            }
        }
    }

    /// Charges a buffer of `len` complex elements.
    pub fn charge_complex(&self, len: usize) -> Result<Charge<'_>> {
        self.charge(len.saturating_mul(2))
    }
}

/// A live charge; released on drop.
#[must_use = "dropping a charge releases it immediately"]
#[derive(Debug)]
pub struct Charge<'a> {
    tracker: &'a MemoryTracker,
    amount: usize,
}

impl Charge<'_> {
    pub fn amount(&self) -> usize {
        self.amount
    }

    pub fn release(self) {}
}

impl Drop for Charge<'_> {
    fn drop(&mut self) {
        self.tracker.current.fetch_sub(self.amount, Ordering::SeqCst);
    }
}

/// Measured high-water mark of one primitive call next to its model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemoryAudit {
    pub peak: usize,
    pub model: f64,
}

impl MemoryAudit {
    /// `peak / model`.
    pub fn ratio(&self) -> f64 {
        self.peak as f64 / self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_tracks_high_water_mark() {
        let t = MemoryTracker::unlimited();
        let a = t.charge(10).unwrap();
        let b = t.charge(5).unwrap();
        drop(a);
        let c = t.charge(7).unwrap();
        assert_eq!(t.current(), 12);
        assert_eq!(t.peak(), 15);
        drop((b, c));
        assert_eq!(t.current(), 0);
    }

    #[test]
    fn capped_tracker_refuses_overflow() {
        let t = MemoryTracker::with_capacity(10);
        let _a = t.charge(8).unwrap();
        match t.charge(3) {
            Err(Error::ResourceExhausted { requested: 3, in_use: 8, capacity: 10 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(t.current(), 8);
        assert!(t.charge(2).is_ok());
    }
}
