//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, [`Exec::Parallel`] runs on the rayon pool.
//! Without it, both modes execute sequentially. Either way the output of
//! every helper is independent of the mode: results are collected in input
//! order and reductions fold fixed-size chunks in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution mode for the data-parallel phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether work actually fans out to multiple threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Like [`map`] over the index range `0..n`.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fallible [`map`]; returns the error of the lowest failing index.
pub fn try_map<T, R, E, F>(exec: Exec, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
{
    map(exec, items, f).into_iter().collect()
}

/// Number of items each worker folds before chunk results are merged.
pub const CHUNK: usize = 8;

/// Folds chunks of [`CHUNK`] consecutive indices with `fold`, then merges the
/// chunk accumulators left to right with `merge`.
pub fn chunked_reduce<A, I, F, M>(exec: Exec, n: usize, init: I, fold: F, merge: M) -> Option<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let partial = map_range(exec, chunks, |c| {
        let mut acc = init();
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            fold(&mut acc, i);
        }
        acc
    });
    let mut iter = partial.into_iter();
    let mut acc = iter.next()?;
    for p in iter {
        merge(&mut acc, p);
    }
    Some(acc)
}
