//! Data-parallel helpers. With the `parallel` feature these dispatch to
//! rayon; without it they are plain sequential loops with identical
//! results (every reduction here is order-independent or done serially).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Call `f(index, chunk)` on consecutive `chunk`-sized pieces of `data`.
pub fn for_each_chunk<T: Send>(data: &mut [T], chunk: usize, f: impl Fn(usize, &mut [T]) + Sync + Send) {
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Order-preserving map.
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    return items.par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return items.iter().map(f).collect();
}

/// Order-preserving map over `0..n`.
pub fn map_range<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Run `f` inside a pool with `threads` workers (no-op when sequential).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// NaN-propagating max.
pub fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Apply `f(index, chunk)` to chunks `lo..hi` of `data` and reduce the
/// returned values with [`nan_max`].
pub fn chunks_max<T: Send>(
    data: &mut [T],
    chunk: usize,
    lo: usize,
    hi: usize,
    f: impl Fn(usize, &mut [T]) -> f64 + Sync + Send,
) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    let part = &mut data[lo * chunk..hi * chunk];
    #[cfg(feature = "parallel")]
    return part
        .par_chunks_mut(chunk)
        .enumerate()
        .map(|(i, c)| f(lo + i, c))
        .reduce(|| 0.0, nan_max);
    #[cfg(not(feature = "parallel"))]
    return part.chunks_mut(chunk).enumerate().map(|(i, c)| f(lo + i, c)).fold(0.0, nan_max);
}

/// Worker count used to size batches.
pub fn workers() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads().max(1);
    #[cfg(not(feature = "parallel"))]
    return 1;
}

/// Map `items` in batches of at most `workers()` concurrent calls, handing
/// each result to `consume` in input order. Bounds peak memory when every
/// result is large, and keeps reductions deterministic.
pub fn map_batched<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> R + Sync + Send,
    mut consume: impl FnMut(usize, R),
) {
    let b = workers();
    let mut start = 0;
    while start < items.len() {
        let end = (start + b).min(items.len());
        for (i, r) in map(&items[start..end], &f).into_iter().enumerate() {
            consume(start + i, r);
        }
        start = end;
    }
}
