//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper hands each task a disjoint output slice and runs the task
//! body sequentially, so results are bit-identical whichever path runs.
//! With the `parallel` feature off, everything is sequential. With it on,
//! [`set_enabled`] switches at runtime (benchmarks compare both paths).

use std::sync::atomic::{AtomicBool, Ordering};

static ENABLED: AtomicBool = AtomicBool::new(true);

pub fn set_enabled(on: bool) {
    ENABLED.store(on, Ordering::Relaxed);
}

pub fn enabled() -> bool {
    cfg!(feature = "parallel") && ENABLED.load(Ordering::Relaxed)
}

/// Calls `f(index, chunk)` for each `chunk`-sized piece of `data`.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    if chunk == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    if enabled() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Like [`for_each_chunk`] but over two outputs chunked in lockstep.
pub fn for_each_chunk2<A, B, F>(a: &mut [A], ca: usize, b: &mut [B], cb: usize, f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut [A], &mut [B]) + Send + Sync,
{
    if ca == 0 || cb == 0 || a.is_empty() {
        return;
    }
    debug_assert_eq!(a.len() / ca, b.len() / cb);
    #[cfg(feature = "parallel")]
    if enabled() {
        use rayon::prelude::*;
        a.par_chunks_mut(ca)
            .zip(b.par_chunks_mut(cb))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
        return;
    }
    a.chunks_mut(ca)
        .zip(b.chunks_mut(cb))
        .enumerate()
        .for_each(|(i, (x, y))| f(i, x, y));
}

/// Ordered map over `0..n`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Ordered map over a slice.
pub fn map_slice<I, R, F>(items: &[I], f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    F: Fn(&I) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if enabled() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}
