//! Replica execution.
//!
//! Replicas are independent tasks indexed `0..n`. Results are always
//! returned (or folded) in index order, so output does not depend on the
//! number of worker threads. With the `parallel` feature the work runs on the
//! current rayon pool; without it everything runs on the calling thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk size of [`fold_replicas`]; part of the determinism contract.
pub const FOLD_CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    Sequential,
    /// Runs on the current rayon pool; identical to `Sequential` when the
    /// `parallel` feature is off.
    Parallel,
}

impl Default for Executor {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Executor::Parallel
        } else {
            Executor::Sequential
        }
    }
}

impl Executor {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Executor::Parallel
    }
}

pub fn map_replicas<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    map_replicas_with(Executor::default(), n, f)
}

pub fn map_replicas_with<T, F>(exec: Executor, n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Folds replica results chunk by chunk: each chunk of [`FOLD_CHUNK`]
/// consecutive replicas is folded in order, and chunk accumulators are merged
/// in chunk order.
pub fn fold_replicas<A, F, M>(n: u64, init: impl Fn() -> A + Sync + Send, step: F, merge: M) -> A
where
    A: Send,
    F: Fn(&mut A, u64) + Sync + Send,
    M: Fn(A, A) -> A,
{
    fold_replicas_with(Executor::default(), n, init, step, merge)
}

pub fn fold_replicas_with<A, F, M>(exec: Executor, n: u64, init: impl Fn() -> A + Sync + Send, step: F, merge: M) -> A
where
    A: Send,
    F: Fn(&mut A, u64) + Sync + Send,
    M: Fn(A, A) -> A,
{
    let chunks = n.div_ceil(FOLD_CHUNK);
    let partial = map_replicas_with(exec, chunks, |c| {
        let mut acc = init();
        let lo = c * FOLD_CHUNK;
        let hi = (lo + FOLD_CHUNK).min(n);
        for i in lo..hi {
            step(&mut acc, i);
        }
        acc
    });
    partial.into_iter().fold(init(), merge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_results() {
        let v = map_replicas(10, |i| i * i);
        assert_eq!(v, (0..10).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn fold_matches_sequential_sum_bitwise() {
        let f = |i: u64| ((i as f64) * 0.37).sin() * 1e-3;
        let n = 3 * FOLD_CHUNK + 17;
        let a = fold_replicas_with(Executor::Sequential, n, || 0.0f64, |acc, i| *acc += f(i), |x, y| x + y);
        let b = fold_replicas(n, || 0.0f64, |acc, i| *acc += f(i), |x, y| x + y);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
