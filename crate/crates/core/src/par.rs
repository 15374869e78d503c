//! Data-parallel map over an index range, sequential without the
//! `parallel` feature. Output order always follows the index.

#[cfg(feature = "parallel")]
pub(crate) fn map_range<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<T, F>(n: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..n).map(f).collect()
}
