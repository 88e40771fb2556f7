//! Batch execution over index ranges.
//!
//! The simulation inner loops (oracle queries, replicate estimates, sweep
//! cells) all map a pure function over `0..n`, with randomness coming from
//! per-index substreams. Results are collected in index order, so the output
//! is identical whether the map runs on one thread or many. The `parallel`
//! feature backs [`map_indexed`] with rayon; without it the sequential path
//! is used everywhere.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_seq(n, f)
}

/// Sequential reference path; always available so benchmarks can compare it
/// against the parallel dispatch.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn parallel_and_sequential_agree() {
        let stream = Stream::root(99).child("exec-test");
        let f = |i: usize| stream.index(i as u64).rng().next_f64();
        assert_eq!(map_indexed(10_000, f), map_indexed_seq(10_000, f));
    }
}
