//! Data-parallel helpers with a sequential fallback.
//!
//! With the default `parallel` feature the indexed map runs on the rayon
//! thread pool; without it the same API runs on the calling thread. Callers
//! that reduce floating-point partials must fold the returned `Vec` in index
//! order so results are bit-identical regardless of the feature or thread
//! count. `map_collect_seq` is always available so benchmarks can compare
//! both paths inside one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
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

/// Sequential reference implementation of [`map_collect`].
pub fn map_collect_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Splits `len` items into chunks of at most `chunk` and returns the
/// inclusive-exclusive bounds of each, in order.
pub fn chunk_bounds(len: usize, chunk: usize) -> Vec<(usize, usize)> {
    assert!(chunk > 0, "chunk size must be positive");
    let mut out = Vec::with_capacity(len.div_ceil(chunk));
    let mut start = 0;
    while start < len {
        let end = (start + chunk).min(len);
        out.push((start, end));
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_collect_preserves_order() {
        let par = map_collect(1000, |i| i * i);
        let seq = map_collect_seq(1000, |i| i * i);
        assert_eq!(par, seq);
    }

    #[test]
    fn chunk_bounds_cover_range_without_overlap() {
        let bounds = chunk_bounds(1003, 128);
        assert_eq!(bounds.first(), Some(&(0, 128)));
        assert_eq!(bounds.last(), Some(&(896, 1003)));
        let mut expect = 0;
        for (a, b) in bounds {
            assert_eq!(a, expect);
            assert!(b > a);
            expect = b;
        }
        assert_eq!(expect, 1003);
    }

    #[test]
    fn float_sum_identical_across_paths() {
        let f = |i: usize| ((i as f64) * 0.1).sin() / ((i + 1) as f64);
        let a: f64 = map_collect(5000, f).iter().sum();
        let b: f64 = map_collect_seq(5000, f).iter().sum();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
