//! Thin dispatch layer between rayon and plain iteration.
//!
//! Every data-parallel loop in this crate goes through these helpers so that
//! the `parallel` feature can be dropped without touching call sites. Results
//! are always collected in input order and reduced sequentially by the
//! caller, which keeps outputs bit-identical across thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to `0..n` and collects the results in index order.
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

/// Applies `f` to each item and collects the results in input order.
pub(crate) fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
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
