//! Thin indirection over rayon so the crate builds with a sequential
//! fallback when the `parallel` feature is off.

/// Map every index through `f` and keep the smallest `Some` result.
/// `f` must be pure; the reduction order never affects the winner because
/// the key type carries a total order.
#[cfg(feature = "parallel")]
pub(crate) fn filter_min_indexed<K, F>(len: usize, f: F) -> Option<K>
where
    K: Ord + Send,
    F: Fn(usize) -> Option<K> + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().filter_map(f).min()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn filter_min_indexed<K, F>(len: usize, f: F) -> Option<K>
where
    K: Ord + Send,
    F: Fn(usize) -> Option<K> + Sync + Send,
{
    (0..len).filter_map(f).min()
}

/// `f64` wrapper with the IEEE total order, for use as a reduction key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalF64(pub f64);

impl Eq for TotalF64 {}

impl PartialOrd for TotalF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TotalF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
