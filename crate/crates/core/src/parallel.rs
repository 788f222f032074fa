//! Data-parallel loops over disjoint chunks.
//!
//! Work is always split into the same chunks regardless of worker count, and
//! each chunk is processed by exactly one worker, so any computation that is
//! deterministic per chunk gives bit-identical results for every executor.

/// An executor for chunked parallel-for loops.
pub trait Parallel: Sync {
    fn workers(&self) -> usize;

    /// Calls `f(scratch, index, chunk)` for every `chunk`-sized piece of
    /// `data` (the last may be shorter). Each concurrently running worker gets
    /// exclusive use of one element of `scratch`, which must be nonempty.
    fn for_each_chunk<D, W, F>(&self, data: &mut [D], chunk: usize, scratch: &mut [W], f: F)
    where
        D: Send,
        W: Send,
        F: Fn(&mut W, usize, &mut [D]) + Sync;

    /// [`Parallel::for_each_chunk`] without per-worker scratch.
    fn for_each<D, F>(&self, data: &mut [D], chunk: usize, f: F)
    where
        D: Send,
        F: Fn(usize, &mut [D]) + Sync,
    {
        let mut units = alloc::vec![(); self.workers()];
        self.for_each_chunk(data, chunk, &mut units, |_, i, c| f(i, c));
    }
}

/// Runs everything on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl Parallel for Serial {
    fn workers(&self) -> usize {
        1
    }

    fn for_each_chunk<D, W, F>(&self, data: &mut [D], chunk: usize, scratch: &mut [W], f: F)
    where
        D: Send,
        W: Send,
        F: Fn(&mut W, usize, &mut [D]) + Sync,
    {
        let w = &mut scratch[0];
        for (i, c) in data.chunks_mut(chunk.max(1)).enumerate() {
            f(w, i, c);
        }
    }
}

/// Scoped OS threads; chunks are dealt out in contiguous, balanced runs.
#[cfg(feature = "std")]
#[derive(Clone, Copy, Debug)]
pub struct Threads {
    workers: usize,
}

#[cfg(feature = "std")]
impl Threads {
    /// `workers` is clamped to at least one.
    pub fn new(workers: usize) -> Self {
        Threads {
            workers: workers.max(1),
        }
    }

    pub fn available() -> Self {
        Self::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[cfg(feature = "std")]
impl Parallel for Threads {
    fn workers(&self) -> usize {
        self.workers
    }

    fn for_each_chunk<D, W, F>(&self, data: &mut [D], chunk: usize, scratch: &mut [W], f: F)
    where
        D: Send,
        W: Send,
        F: Fn(&mut W, usize, &mut [D]) + Sync,
    {
        let chunk = chunk.max(1);
        let n_chunks = data.len().div_ceil(chunk);
        let groups = self.workers.min(scratch.len()).min(n_chunks);
        if groups <= 1 {
            return Serial.for_each_chunk(data, chunk, scratch, f);
        }
        let f = &f;
        std::thread::scope(|scope| {
            let mut rest = data;
            let mut first = 0;
            for (g, w) in scratch.iter_mut().take(groups).enumerate() {
                let count = n_chunks / groups + usize::from(g < n_chunks % groups);
                let take = (count * chunk).min(rest.len());
                let (mine, tail) = core::mem::take(&mut rest).split_at_mut(take);
                rest = tail;
                let start = first;
                first += count;
                scope.spawn(move || {
                    for (i, c) in mine.chunks_mut(chunk).enumerate() {
                        f(w, start + i, c);
                    }
                });
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn fill<P: Parallel>(p: &P) -> Vec<usize> {
        let mut v = alloc::vec![0usize; 103];
        let mut scratch = alloc::vec![0usize; p.workers()];
        p.for_each_chunk(&mut v, 10, &mut scratch, |w, i, c| {
            *w += 1;
            for (k, x) in c.iter_mut().enumerate() {
                *x = i * 1000 + k;
            }
        });
        v
    }

    #[test]
    fn chunk_indices_are_executor_independent() {
        let serial = fill(&Serial);
        #[cfg(feature = "std")]
        for n in [1, 2, 3, 8, 64] {
            assert_eq!(fill(&Threads::new(n)), serial);
        }
        assert_eq!(serial[102], 10 * 1000 + 2);
    }
}
