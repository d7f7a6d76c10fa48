//! Data-parallel helpers with a sequential fallback.
//!
//! Every reduction in the crate is order-pinned: items (or fixed-size chunks)
//! are mapped independently and merged in index order, so the `parallel` and
//! sequential builds produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk size used when accumulating per-item gradient contributions.
pub const GRAD_CHUNK: usize = 256;

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Always-sequential variant, kept for benchmarking against `map_ordered`.
pub fn map_ordered_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over index ranges `[start, end)` covering `0..len` in fixed
/// chunks, then merges the chunk results in order with `merge`.
///
/// Chunk boundaries depend only on `len`, never on thread count, so the
/// merged result is identical across thread pools and the sequential build.
pub fn chunked_reduce<R, F, M>(len: usize, chunk: usize, f: F, mut merge: M) -> Option<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
    M: FnMut(R, R) -> R,
{
    if len == 0 {
        return None;
    }
    let ranges: Vec<std::ops::Range<usize>> = (0..len)
        .step_by(chunk.max(1))
        .map(|s| s..(s + chunk).min(len))
        .collect();
    let parts = map_ordered(&ranges, |r| f(r.clone()));
    let mut it = parts.into_iter();
    let first = it.next()?;
    Some(it.fold(first, |acc, x| merge(acc, x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_matches_seq() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_ordered(&xs, |x| x * x);
        let b = map_ordered_seq(&xs, |x| x * x);
        assert_eq!(a, b);
    }

    #[test]
    fn chunked_reduce_is_order_pinned() {
        // Floating-point sum depends on association order; equal results
        // prove the chunking is fixed.
        let n = 10_000;
        let f = |r: std::ops::Range<usize>| r.map(|i| (i as f64).sqrt()).sum::<f64>();
        let a = chunked_reduce(n, 64, f, |x, y| x + y).unwrap();
        let b = chunked_reduce(n, 64, f, |x, y| x + y).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn chunked_reduce_empty() {
        assert!(chunked_reduce(0, 8, |_| 0.0f64, |x, y| x + y).is_none());
    }
}
