//! Data-parallel map helpers with a sequential fallback.
//!
//! Built with the `parallel` feature (the default), [`par_map`] and
//! [`par_map_range`] fan out over rayon; without it they degrade to plain
//! iteration. Outputs are positionally ordered either way, so as long as
//! worker closures derive their randomness from per-item context the results
//! are identical across both builds and any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over a slice, in parallel when available.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over `0..n`, in parallel when available.
pub fn par_map_range<U, F>(n: usize, f: F) -> Vec<U>
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

/// Always-sequential reference path, kept for the bench suite.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
