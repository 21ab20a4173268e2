//! Node-parallel maps and fixed-order reductions.
//!
//! With the `parallel` feature the maps run on the rayon pool; without it
//! (or after `set_enabled(false)`) the same code runs on the calling thread.
//! Reductions split the index range into fixed chunks of `CHUNK` and add the
//! chunk partials left to right, so both paths return bit-identical sums.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const CHUNK: usize = 1024;

/// Below this many items the parallel path is skipped.
#[cfg(feature = "parallel")]
const MIN_PARALLEL: usize = 2 * CHUNK;

static ENABLED: AtomicBool = AtomicBool::new(true);

/// Runtime switch for the rayon path. Has no effect without the feature.
pub fn set_enabled(on: bool) {
    ENABLED.store(on, Ordering::Relaxed);
}

pub fn enabled() -> bool {
    cfg!(feature = "parallel") && ENABLED.load(Ordering::Relaxed)
}

#[cfg(feature = "parallel")]
#[inline]
fn go_parallel(n: usize) -> bool {
    n >= MIN_PARALLEL && enabled()
}

pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(n) {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(items.len()) {
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
        return;
    }
    items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

fn chunk_partial<F: Fn(usize) -> f64>(n: usize, c: usize, f: &F) -> f64 {
    let lo = c * CHUNK;
    let hi = (lo + CHUNK).min(n);
    let mut acc = 0.0;
    for i in lo..hi {
        acc += f(i);
    }
    acc
}

/// Sum of `f(i)` for `i in 0..n` in a fixed association order.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    #[cfg(feature = "parallel")]
    if go_parallel(n) {
        let partials: Vec<f64> = (0..chunks)
            .into_par_iter()
            .map(|c| chunk_partial(n, c, &f))
            .collect();
        return partials.into_iter().fold(0.0, |a, b| a + b);
    }
    (0..chunks).map(|c| chunk_partial(n, c, &f)).fold(0.0, |a, b| a + b)
}

/// Maximum of `f(i)`; NaN entries propagate.
pub fn max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let fold = |a: f64, b: f64| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) };
    #[cfg(feature = "parallel")]
    if go_parallel(n) {
        return (0..n)
            .into_par_iter()
            .map(f)
            .reduce(|| f64::NEG_INFINITY, fold);
    }
    (0..n).map(f).fold(f64::NEG_INFINITY, fold)
}

/// Runs independent jobs, possibly concurrently, returning results in input order.
pub fn map_jobs<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if enabled() && items.len() > 1 {
        return items.into_par_iter().map(f).collect();
    }
    items.into_iter().map(f).collect()
}
