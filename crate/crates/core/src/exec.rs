//! Execution strategy for the embarrassingly parallel loops (per-sample, per-timestep).
//!
//! With the `parallel` feature (default) `map_indexed` fans out over rayon;
//! without it the same call runs sequentially. `map_indexed_seq` is always
//! sequential and exists so benchmarks can compare both strategies in one build.
//! Work items must not share mutable state; determinism comes from per-index
//! RNG streams, never from scheduling order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to each index in `0..n`, preserving index order in the output.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Sequential reference implementation of [`map_indexed`].
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
