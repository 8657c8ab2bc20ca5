//! Execution backend used by the data-parallel inner loops.
//!
//! Work is split into blocks that are processed independently and merged in
//! block order, so every result is bit-identical regardless of thread
//! scheduling and identical between the `parallel` and sequential builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Trials per block in block-structured Monte Carlo loops.
pub(crate) const BLOCK: usize = 1024;

/// Name of the compiled execution backend.
pub fn backend() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

/// Applies `f` to every index in `0..n` and returns the results in index
/// order.
pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Number of blocks needed to cover `n` items.
pub(crate) fn block_count(n: usize) -> usize {
    n.div_ceil(BLOCK)
}

/// Half-open item range covered by block `b`.
pub(crate) fn block_range(b: usize, n: usize) -> std::ops::Range<usize> {
    let start = b * BLOCK;
    start..((start + BLOCK).min(n))
}
