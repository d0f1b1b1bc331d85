//! Execution strategy for the data-parallel inner loops.
//!
//! Every parallel loop in this crate goes through [`map_indexed`], which maps
//! a pure function over `0..n` and collects the results in index order. With
//! the `parallel` feature (default) the map runs on the rayon pool unless a
//! thread-local override forces sequential execution; without the feature the
//! sequential path is the only one compiled. Callers derive any randomness
//! from the index, so both paths produce bit-identical output.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Run `f` with parallel execution disabled on this thread.
///
/// Used by the benchmarks to compare the rayon path against the sequential
/// fallback within a single compiled artifact.
pub fn with_sequential<R>(f: impl FnOnce() -> R) -> R {
    FORCE_SEQUENTIAL.with(|flag| {
        let prev = flag.replace(true);
        let out = f();
        flag.set(prev);
        out
    })
}

fn sequential_forced() -> bool {
    FORCE_SEQUENTIAL.with(|flag| flag.get())
}

/// Map `f` over `0..n`, in parallel when available, preserving index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if sequential_forced() || n < 2 {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Map `f` over `0..n` sequentially (the `parallel` feature is disabled).
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let _ = sequential_forced();
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_index_order() {
        let out = map_indexed(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_override_matches() {
        let par = map_indexed(64, |i| (i as f64).sin());
        let seq = with_sequential(|| map_indexed(64, |i| (i as f64).sin()));
        assert_eq!(par, seq);
    }
}
